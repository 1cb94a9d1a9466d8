#!/usr/bin/env python3
"""Generate the synthetic seven-study historical control data set.

Patient-level exponential PFS times (medians 3.5 to 6 months, 1 month = 30
days) with staggered entry and administrative censoring are tabulated into
per-interval counts on the day grid 0,30,...,180,240,300,360. Writes
km_counts.csv (at risk / events / censored per interval) to the output
directory. Run once; the output is checked in.
"""
import argparse
import csv
import math
import random
from pathlib import Path

GRID = [0, 30, 60, 90, 120, 150, 180, 240, 300, 360]
# (median in months, patients, accrual months, study length months)
STUDIES = [
    (3.5, 90, 12, 18),
    (4.0, 120, 14, 20),
    (4.5, 70, 10, 16),
    (5.0, 150, 15, 22),
    (5.0, 100, 12, 18),
    (5.5, 80, 12, 20),
    (6.0, 110, 14, 20),
]


def tabulate(times, events):
    rows = []
    for k in range(len(GRID) - 1):
        lo, hi = GRID[k], GRID[k + 1]
        at_risk = sum(1 for t in times if t > lo)
        dead = sum(1 for t, e in zip(times, events) if lo < t <= hi and e)
        cens = sum(1 for t, e in zip(times, events) if lo < t <= hi and not e)
        rows.append((k + 1, at_risk, dead, cens))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "app2"))
    ap.add_argument("--seed", type=int, default=20190805)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "km_counts.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["study", "interval", "n_at_risk", "deaths", "censored"])
        for j, (median, n, accrual, length) in enumerate(STUDIES, start=1):
            rate = math.log(2.0) / (30.0 * median)
            times, events = [], []
            for _ in range(n):
                entry = rng.uniform(0.0, 30.0 * accrual)
                followup = 30.0 * length - entry
                t = rng.expovariate(rate)
                times.append(min(t, followup))
                events.append(t <= followup)
            for k, at_risk, dead, cens in tabulate(times, events):
                if at_risk > 0:
                    w.writerow([j, k, at_risk, dead, cens])


if __name__ == "__main__":
    main()
