#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include <histsurv/csv.hpp>
#include <histsurv/random.hpp>
#include <histsurv/survival.hpp>

using namespace histsurv;

namespace {

IntervalGrid unit_grid(std::size_t K) {
  std::vector<double> b(K + 1);
  for (std::size_t k = 0; k <= K; ++k) b[k] = static_cast<double>(k);
  return IntervalGrid(b, "years");
}

KmIntervalRecord rec(std::int64_t n, std::int64_t r, std::int64_t c, std::size_t k = 0, std::int64_t study = 1) {
  return {study, k, n, r, c};
}

}  // namespace

TEST(IntervalGrid, RejectsBadBoundaries) {
  EXPECT_THROW(IntervalGrid({0.0}), InputError);
  EXPECT_THROW(IntervalGrid({0.5, 1.0}), InputError);
  EXPECT_THROW(IntervalGrid({0.0, 1.0, 1.0}), InputError);
  EXPECT_THROW(IntervalGrid({0.0, 2.0, 1.0}), InputError);
  EXPECT_NO_THROW(IntervalGrid({0.0, 0.25}));
}

TEST(IntervalGrid, LengthsAndOverlap) {
  const IntervalGrid g({0.0, 0.25, 0.5, 2.0});
  EXPECT_EQ(g.size(), 3u);
  EXPECT_DOUBLE_EQ(g.length(2), 1.5);
  EXPECT_DOUBLE_EQ(g.overlap(0, 0.1), 0.1);
  EXPECT_DOUBLE_EQ(g.overlap(1, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(g.overlap(0, 5.0), 0.25);
  EXPECT_DOUBLE_EQ(g.overlap(2, 5.0), 4.5);  // last interval runs on
  const auto g2 = IntervalGrid::from_lengths(std::vector<double>{0.25, 0.25, 1.5});
  EXPECT_EQ(g2, g);
}

TEST(Exposure, FormulaExamples) {
  EXPECT_DOUBLE_EQ(exposure_from_counts(rec(10, 0, 0), unit_grid(1)), 10.0);
  EXPECT_DOUBLE_EQ(exposure_from_counts(rec(10, 2, 0), IntervalGrid({0.0, 0.25})), 2.25);
  EXPECT_DOUBLE_EQ(exposure_from_counts(rec(4, 2, 2), unit_grid(1)), 2.0);
  EXPECT_DOUBLE_EQ(exposure_from_counts(rec(0, 0, 0), unit_grid(1)), 0.0);
}

TEST(Exposure, Errors) {
  EXPECT_THROW(exposure_from_counts(rec(3, 2, 2), unit_grid(1)), InputError);
  EXPECT_THROW(exposure_from_counts(rec(3, 1, 0, 4), unit_grid(2)), InputError);
  EXPECT_THROW(exposure_from_counts(rec(3, -1, 0), unit_grid(1)), InputError);
}

TEST(Exposure, LinearInLengthAndBounded) {
  Random rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto n = static_cast<std::int64_t>(rng.uniform() * 200);
    const auto r = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(n + 1));
    const auto c = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(n - r + 1));
    const double L = 0.05 + 3.0 * rng.uniform();
    const double e1 = exposure_from_counts(rec(n, r, c), IntervalGrid({0.0, L}));
    const double e2 = exposure_from_counts(rec(n, r, c), IntervalGrid({0.0, 2.0 * L}));
    EXPECT_NEAR(e2, 2.0 * e1, 1e-9 * (1.0 + e1));
    EXPECT_LE(e1, static_cast<double>(n) * L + 1e-12);
    EXPECT_GE(e1, 0.5 * L * static_cast<double>(r + c) - 1e-12);
  }
}

TEST(Survival, Examples) {
  const auto g = unit_grid(2);
  const std::vector<double> flat{0.7, 0.7};
  for (double t : {0.3, 1.0, 1.9, 2.0}) EXPECT_NEAR(survival_at(g, flat, t), std::exp(-0.7 * t), 1e-15);
  EXPECT_EQ(survival_at(g, flat, 0.0), 1.0);
  EXPECT_NEAR(survival_at(PiecewiseHazard(g, {0.5, 1.0}), 1.5), std::exp(-1.0), 1e-15);
  EXPECT_THROW(survival_at(g, flat, -0.1), InputError);
}

TEST(Survival, BeyondHorizonUsesLastRate) {
  const PiecewiseHazard h(unit_grid(2), {0.5, 1.0});
  EXPECT_NEAR(survival_at(h, 3.0), std::exp(-(0.5 + 1.0 + 1.0)), 1e-15);
}

TEST(Survival, RejectsBadHazard) {
  EXPECT_THROW(PiecewiseHazard(unit_grid(2), {0.5}), InputError);
  EXPECT_THROW(PiecewiseHazard(unit_grid(2), {0.5, 0.0}), InputError);
  EXPECT_THROW(PiecewiseHazard(unit_grid(2), {0.5, INFINITY}), InputError);
}

TEST(MedianSurvival, Examples) {
  const double ln2 = std::numbers::ln2;
  EXPECT_NEAR(median_survival(PiecewiseHazard(unit_grid(1), {ln2})), 1.0, 1e-14);
  EXPECT_NEAR(median_survival(PiecewiseHazard(unit_grid(2), {ln2, ln2})), 1.0, 1e-14);
  // exp(-0.1) exp(-0.1 (t - 1)) = 0.5  <=>  t = ln 2 / 0.1
  EXPECT_NEAR(median_survival(PiecewiseHazard(unit_grid(1), {0.1})), ln2 / 0.1, 1e-12);
  EXPECT_NEAR(median_survival(PiecewiseHazard(unit_grid(1), {0.1})), 6.931, 5e-4);
}

// Monotone, continuous, S(0) = 1 and S(median) = 1/2 on random hazards.
TEST(SurvivalProperties, RandomHazards) {
  Random rng(11);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t K = 1 + static_cast<std::size_t>(rng.uniform() * 12);
    std::vector<double> lengths(K), rates(K);
    for (auto& l : lengths) l = 0.05 + rng.uniform();
    for (auto& r : rates) r = std::exp(rng.normal(-1.0, 1.5));
    const PiecewiseHazard h(IntervalGrid::from_lengths(lengths), rates);
    EXPECT_EQ(survival_at(h, 0.0), 1.0);
    double prev = 1.0;
    for (int i = 1; i <= 60; ++i) {
      const double t = 0.1 * i;
      const double s = survival_at(h, t);
      EXPECT_LE(s, prev);
      EXPECT_GT(s, 0.0);
      EXPECT_NEAR(survival_at(h, t + 1e-9), s, 1e-7);
      prev = s;
    }
    const double m = median_survival(h);
    EXPECT_GT(m, 0.0);
    EXPECT_NEAR(survival_at(h, m), 0.5, 0.5e-10);
  }
}

TEST(Aggregate, FioccoStudyTenFirstInterval) {
  const IntervalGrid g({0, 0.25, 0.5, 0.75, 1, 1.25, 1.5, 1.75, 2.08, 2.5, 2.92, 3.33, 4});
  const std::vector<KmIntervalRecord> recs{rec(94, 1, 0, 0, 10)};
  const auto rows = aggregate_dataset(recs, g);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].study, 9u);
  EXPECT_EQ(rows[0].int_low, 0u);
  EXPECT_EQ(rows[0].events, 1);
  EXPECT_NEAR(rows[0].exposure, 23.4, 0.05);
}

TEST(Aggregate, EmptyZeroAndDuplicates) {
  const auto g = unit_grid(3);
  EXPECT_TRUE(aggregate_dataset(std::vector<KmIntervalRecord>{}, g).empty());
  const std::vector<KmIntervalRecord> with_zero{rec(5, 1, 0, 0), rec(0, 0, 0, 1)};
  EXPECT_EQ(aggregate_dataset(with_zero, g).size(), 1u);
  const std::vector<KmIntervalRecord> dup{rec(5, 1, 0, 0), rec(4, 1, 0, 0)};
  EXPECT_THROW(aggregate_dataset(dup, g), InputError);
}

// Exact per-interval exposure of uncensored piecewise-exponential data:
// events / exposure converges to the true rate.
TEST(SurvivalProperties, EmpiricalRatesRecoverHazard) {
  const IntervalGrid g({0.0, 0.5, 1.0, 2.0});
  const std::vector<double> lambda{0.8, 0.4, 1.2};
  Random rng(2024);
  std::vector<double> events(3, 0.0), exposure(3, 0.0);
  for (int i = 0; i < 100000; ++i) {
    // Inverse transform on the cumulative hazard.
    const double target = rng.exponential(1.0);
    double h = 0.0, t = 0.0;
    std::size_t k = 0;
    for (;; ++k) {
      const double len = k + 1 < g.size() ? g.length(k) : INFINITY;
      if (h + lambda[k] * len >= target) {
        t = g.lower(k) + (target - h) / lambda[k];
        break;
      }
      h += lambda[k] * len;
    }
    for (std::size_t j = 0; j < g.size(); ++j) exposure[j] += g.overlap(j, t);
    events[k] += 1.0;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double rate = events[k] / exposure[k];
    const double se = std::sqrt(events[k]) / exposure[k];
    EXPECT_NEAR(rate, lambda[k], 3.0 * se) << "interval " << k;
  }
}

TEST(Csv, KmRecordsAndErrors) {
  std::istringstream ok("study,interval,n_at_risk,deaths,censored\n10,1,94,1,0\n");
  const auto recs = read_km_records(ok, "km.csv");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].interval, 0u);
  EXPECT_EQ(recs[0].study, 10);

  std::istringstream missing("study,interval,n_at_risk,deaths\n1,1,5,1\n");
  try {
    read_km_records(missing, "km.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("censored"), std::string::npos);
  }
  std::istringstream bad("study,interval,n_at_risk,deaths,censored\n1,1,5,1,0\n1,2,x,1,0\n");
  try {
    read_km_records(bad, "km.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("km.csv:3"), std::string::npos) << e.what();
  }
  std::istringstream empty("study,interval,n_at_risk,deaths,censored\n");
  EXPECT_TRUE(read_km_records(empty, "km.csv").empty());
}

TEST(Csv, ObservationsRoundTrip) {
  std::istringstream in("study,int_low,int_high,events,exposure,X\n1,1,1,3,9.5,0\n2,1,2,0,4.25,1\n");
  const auto ds = read_observations(in, "obs.csv");
  EXPECT_EQ(ds.n_studies, 2u);
  ASSERT_EQ(ds.covariate_names, std::vector<std::string>{"X"});
  EXPECT_EQ(ds.rows[1].int_high, 1u);
  std::ostringstream out;
  write_observations(out, ds);
  EXPECT_EQ(out.str(), "study,int_low,int_high,events,exposure,X\n1,1,1,3,9.5,0\n2,1,2,0,4.25,1\n");

  std::istringstream zero("study,int_low,int_high,events,exposure\n1,1,1,0,0\n");
  EXPECT_THROW(read_observations(zero, "obs.csv"), InputError);
}
