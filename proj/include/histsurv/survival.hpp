#pragma once

// Piecewise-exponential survival on a fixed time partition
//
//   0 = I_0 < I_1 < ... < I_K,   hazard lambda_k on (I_{k-1}, I_k]
//
// plus the interval-count bookkeeping used to turn published Kaplan-Meier
// summaries (at risk / deaths / censored per interval) into Poisson
// event/exposure rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace histsurv {

class IntervalGrid {
 public:
  IntervalGrid() = default;

  explicit IntervalGrid(std::vector<double> boundaries, std::string time_unit = "")
      : bounds_(std::move(boundaries)), time_unit_(std::move(time_unit)) {
    if (bounds_.size() < 2)
      throw InputError("interval grid needs at least two boundaries (K >= 1)");
    if (bounds_.front() != 0.0)
      throw InputError("interval grid must start at 0");
    for (std::size_t k = 1; k < bounds_.size(); ++k) {
      if (!std::isfinite(bounds_[k]) || !(bounds_[k] > bounds_[k - 1]))
        throw InputError("interval grid boundaries must be finite and strictly increasing");
    }
  }

  static IntervalGrid from_lengths(std::span<const double> lengths, std::string time_unit = "") {
    std::vector<double> b{0.0};
    for (double len : lengths) b.push_back(b.back() + len);
    return IntervalGrid(std::move(b), std::move(time_unit));
  }

  std::size_t size() const { return bounds_.empty() ? 0 : bounds_.size() - 1; }
  double lower(std::size_t k) const { return bounds_[k]; }
  double upper(std::size_t k) const { return bounds_[k + 1]; }
  double length(std::size_t k) const { return bounds_[k + 1] - bounds_[k]; }
  double horizon() const { return bounds_.back(); }
  std::span<const double> boundaries() const { return bounds_; }
  const std::string& time_unit() const { return time_unit_; }

  // Overlap of [0, t] with interval k, extending the last interval to
  // infinity.
  double overlap(std::size_t k, double t) const {
    if (t <= lower(k)) return 0.0;
    if (k + 1 == size()) return t - lower(k);
    return std::min(t, upper(k)) - lower(k);
  }

  bool operator==(const IntervalGrid& o) const { return bounds_ == o.bounds_; }

 private:
  std::vector<double> bounds_;
  std::string time_unit_;
};

struct KmIntervalRecord {
  std::int64_t study = 0;
  std::size_t interval = 0;  // 0-based
  std::int64_t at_risk = 0;
  std::int64_t deaths = 0;
  std::int64_t censored = 0;
};

// One Poisson row of the piecewise-exponential likelihood. A row may span
// several consecutive intervals [int_low, int_high] (0-based, inclusive);
// its expected count is then the length-weighted average hazard times the
// exposure.
struct ObservationRow {
  std::size_t study = 0;
  std::size_t int_low = 0;
  std::size_t int_high = 0;
  std::int64_t events = 0;
  double exposure = 0.0;
  std::vector<double> covariates;

  bool operator==(const ObservationRow&) const = default;
};

class PiecewiseHazard {
 public:
  PiecewiseHazard(IntervalGrid grid, std::vector<double> rates)
      : grid_(std::move(grid)), rates_(std::move(rates)) {
    if (rates_.size() != grid_.size())
      throw InputError("hazard vector length does not match the interval grid");
    for (double r : rates_)
      if (!(r > 0.0) || !std::isfinite(r))
        throw InputError("hazard rates must be positive and finite");
  }

  const IntervalGrid& grid() const { return grid_; }
  std::span<const double> rates() const { return rates_; }

 private:
  IntervalGrid grid_;
  std::vector<double> rates_;
};

// E = (L/2)(r + c) + L(n - r - c): deaths and censorings are placed at
// mid-interval.
inline double exposure_from_counts(const KmIntervalRecord& rec, const IntervalGrid& grid) {
  if (rec.interval >= grid.size())
    throw InputError("interval index " + std::to_string(rec.interval + 1) + " outside the grid");
  if (rec.at_risk < 0 || rec.deaths < 0 || rec.censored < 0)
    throw InputError("interval counts must be nonnegative");
  if (rec.deaths + rec.censored > rec.at_risk)
    throw InputError("deaths + censored exceeds number at risk");
  const double len = grid.length(rec.interval);
  const auto leaving = static_cast<double>(rec.deaths + rec.censored);
  return 0.5 * len * leaving + len * (static_cast<double>(rec.at_risk) - leaving);
}

// Cumulative hazard at t for rates on grid; the last rate continues past
// the horizon.
inline double cumulative_hazard(const IntervalGrid& grid, std::span<const double> rates, double t) {
  double h = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double ov = grid.overlap(k, t);
    if (ov <= 0.0) break;
    h += rates[k] * ov;
  }
  return h;
}

inline double survival_at(const IntervalGrid& grid, std::span<const double> rates, double t) {
  if (!(t >= 0.0)) throw InputError("survival time must be nonnegative");
  if (t == 0.0) return 1.0;
  return std::exp(-cumulative_hazard(grid, rates, t));
}

inline double survival_at(const PiecewiseHazard& h, double t) {
  return survival_at(h.grid(), h.rates(), t);
}

inline double median_survival(const IntervalGrid& grid, std::span<const double> rates) {
  constexpr double target = std::numbers::ln2;
  double h = 0.0;
  const std::size_t K = grid.size();
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double step = rates[k] * grid.length(k);
    if (h + step >= target) return grid.lower(k) + (target - h) / rates[k];
    h += step;
  }
  return grid.lower(K - 1) + (target - h) / rates[K - 1];
}

inline double median_survival(const PiecewiseHazard& h) {
  return median_survival(h.grid(), h.rates());
}

// One row per record (n > 0), events = deaths, exposure from the
// mid-interval formula. Study ids are taken as 1-based labels; the row's
// study index is label - 1.
inline std::vector<ObservationRow> aggregate_dataset(std::span<const KmIntervalRecord> records,
                                                     const IntervalGrid& grid) {
  std::set<std::pair<std::int64_t, std::size_t>> seen;
  std::vector<ObservationRow> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) {
    if (!seen.emplace(rec.study, rec.interval).second)
      throw InputError("duplicate record for study " + std::to_string(rec.study) + ", interval " +
                       std::to_string(rec.interval + 1));
    if (rec.study < 1) throw InputError("study ids must be positive integers");
    const double e = exposure_from_counts(rec, grid);
    if (rec.at_risk == 0) continue;
    rows.push_back(ObservationRow{static_cast<std::size_t>(rec.study - 1), rec.interval,
                                  rec.interval, rec.deaths, e, {}});
  }
  return rows;
}

}  // namespace histsurv
