#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include <histsurv/design_sim.hpp>

using namespace histsurv;

namespace {

IntervalGrid day_grid() { return IntervalGrid({0, 30, 60, 90, 120, 150, 180, 240, 300, 360}, "days"); }

ScenarioConfig base_scenario() {
  ScenarioConfig sc;
  sc.grid = day_grid();
  return sc;
}

}  // namespace

// Hand-built patients against a direct per-patient tally.
TEST(Tabulate, ExposureAndEventsMatchPerPatientTally) {
  const IntervalGrid g({0.0, 10.0, 25.0});
  const std::vector<SimPatient> pts{
      {0.0, 5.0, false}, {1.0, 40.0, true}, {2.0, 12.0, true}, {3.0, 30.0, false}, {50.0, 1.0, true}};
  // Calendar event times 5, 41, 14, 33, 51; the 3rd is 33.
  const auto trial = tabulate_trial(pts, g, 3);
  EXPECT_DOUBLE_EQ(trial.cutoff, 33.0);
  EXPECT_EQ(trial.n_enrolled, 4u);
  EXPECT_EQ(trial.n_events, 3u);

  double expo[2][2] = {{0, 0}, {0, 0}};
  std::int64_t ev[2][2] = {{0, 0}, {0, 0}};
  for (const auto& p : pts) {
    if (p.arrival > 33.0) continue;
    const double fu = std::min(p.event_time, 33.0 - p.arrival);
    const int arm = p.treatment ? 1 : 0;
    expo[arm][0] += std::min(fu, 10.0);
    expo[arm][1] += std::max(0.0, fu - 10.0);
    if (p.event_time <= 33.0 - p.arrival) ++ev[arm][fu <= 10.0 ? 0 : 1];
  }
  ASSERT_EQ(trial.rows.size(), 4u);
  for (const auto& r : trial.rows) {
    const int arm = static_cast<int>(r.covariates.at(0));
    EXPECT_NEAR(r.exposure, expo[arm][r.int_low], 1e-9);
    EXPECT_EQ(r.events, ev[arm][r.int_low]);
    EXPECT_EQ(r.study, 0u);
  }
  double total = 0.0;
  for (const auto& r : trial.rows) total += r.exposure;
  EXPECT_NEAR(total, trial.exposure, 1e-9);
}

TEST(Simulate, AllEventsWhenRequiredEqualsEnrolled) {
  auto sc = base_scenario();
  sc.n_patients = 60;
  sc.required_events = 60;
  const auto trial = simulate_trial(sc, 0);
  EXPECT_EQ(trial.n_events, 60u);
  EXPECT_EQ(trial.n_enrolled, 60u);
}

TEST(Simulate, BlockRandomizationRatio) {
  auto sc = base_scenario();
  sc.n_patients = 300;
  Random rng(1);
  const auto pts = simulate_patients(sc, rng);
  for (std::size_t b = 0; b < 100; ++b) {
    int treated = 0;
    for (std::size_t i = 3 * b; i < 3 * b + 3; ++i) treated += pts[i].treatment ? 1 : 0;
    EXPECT_EQ(treated, 2);
  }
  EXPECT_DOUBLE_EQ(pts[10].arrival, 10.0);
}

// Large trial: per-arm event rates converge to ln 2 / median (and HR times it).
TEST(Simulate, RatesConvergeToTruth) {
  auto sc = base_scenario();
  sc.n_patients = 30000;
  sc.required_events = 20000;
  sc.enrollment_rate = 50.0;
  sc.hazard_ratio = 0.7;
  const auto trial = simulate_trial(sc, 1);
  double ev[2] = {0, 0}, ex[2] = {0, 0};
  for (const auto& r : trial.rows) {
    const auto arm = static_cast<std::size_t>(r.covariates[0]);
    ev[arm] += static_cast<double>(r.events);
    ex[arm] += r.exposure;
  }
  const double lc = std::numbers::ln2 / 150.0;
  EXPECT_NEAR(ev[0] / ex[0], lc, 3.0 * std::sqrt(ev[0]) / ex[0]);
  EXPECT_NEAR(ev[1] / ex[1], 0.7 * lc, 3.0 * std::sqrt(ev[1]) / ex[1]);
}

TEST(Simulate, DeterministicPerIndex) {
  const auto sc = base_scenario();
  const auto a = simulate_trial(sc, 7), b = simulate_trial(sc, 7), c = simulate_trial(sc, 8);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].events, b.rows[i].events);
    EXPECT_EQ(a.rows[i].exposure, b.rows[i].exposure);
  }
  EXPECT_NE(a.cutoff, c.cutoff);
}

TEST(AnalysisModel, Shapes) {
  const auto g = day_grid();
  HistoricalContext h;
  h.n_studies = 2;
  h.rows = {{0, 0, 0, 3, 100.0, {}}, {1, 0, 0, 4, 120.0, {}}};
  h.log_overall_hazard = std::log(7.5 / 220.0);
  h.map_mean.assign(g.size(), -3.5);
  auto sc = base_scenario();
  const auto trial = simulate_trial(sc, 0);

  const auto strat = analysis_model(trial, nullptr, g, Variant::strat, 0.5);
  EXPECT_EQ(strat.n_studies(), 1u);
  EXPECT_EQ(strat.prior().mu_mode, MuMode::unrelated);
  EXPECT_FALSE(strat.random_effects_active());

  const auto ex = analysis_model(trial, &h, g, Variant::ex, 0.5);
  EXPECT_EQ(ex.n_studies(), 3u);
  EXPECT_EQ(ex.prior().p_exch(2, 4), 1.0);
  EXPECT_NEAR(ex.prior().mu_mean.mean, std::log(7.5 / 220.0), 1e-15);
  EXPECT_EQ(ex.rows().front().covariates, std::vector<double>{0.0});
  EXPECT_EQ(ex.rows().back().study, 2u);

  const auto exnex = analysis_model(trial, &h, g, Variant::exnex, 0.25);
  EXPECT_EQ(exnex.prior().p_exch(2, 3), 0.25);
  EXPECT_EQ(exnex.prior().p_exch(1, 3), 1.0);
  EXPECT_EQ(exnex.prior().nex_mean(2, 0), -3.5);

  EXPECT_THROW(analysis_model(trial, nullptr, g, Variant::ex, 0.5), InputError);
}

// Large stratified trial: the posterior median log-HR sits near the truth.
TEST(Analyze, StratRecoversHazardRatio) {
  auto sc = base_scenario();
  sc.n_patients = 1500;
  sc.required_events = 1200;
  sc.enrollment_rate = 5.0;
  sc.hazard_ratio = 0.55;
  const auto trial = simulate_trial(sc, 2);
  const auto res = analyze_sim(trial, nullptr, sc, 2);
  EXPECT_NEAR(res.log_hr_median, std::log(0.55), 0.15);
  EXPECT_TRUE(res.success);
}

TEST(OperatingCharacteristics, OverwhelmingEffectAlwaysSucceeds) {
  auto sc = base_scenario();
  sc.hazard_ratio = 0.1;
  sc.n_sims = 4;
  sc.sampler.n_burnin = 300;
  sc.sampler.n_iter = 600;
  const auto oc = operating_characteristics(sc, nullptr, 1);
  EXPECT_EQ(oc.success_rate, 1.0);
  EXPECT_EQ(oc.success_rate_se, 0.0);
  EXPECT_EQ(oc.mean_events, 110.0);
  EXPECT_EQ(oc_label(sc), "power");
  sc.hazard_ratio = 1.0;
  EXPECT_EQ(oc_label(sc), "type-I");
}

TEST(OperatingCharacteristics, IndependentOfWorkerCount) {
  auto sc = base_scenario();
  sc.hazard_ratio = 0.7;
  sc.n_sims = 3;
  sc.sampler.n_burnin = 200;
  sc.sampler.n_iter = 300;
  const auto a = operating_characteristics(sc, nullptr, 1);
  const auto b = operating_characteristics(sc, nullptr, 3);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.rmse, b.rmse);
}

TEST(ScenarioConfig, Validation) {
  auto sc = base_scenario();
  EXPECT_NO_THROW(sc.validate());
  sc.required_events = 131;
  EXPECT_THROW(sc.validate(), InputError);
  sc = base_scenario();
  sc.variant = Variant::exnex;
  sc.exnex_weight = 1.0;
  EXPECT_THROW(sc.validate(), InputError);
  sc = base_scenario();
  sc.hazard_ratio = 0.0;
  EXPECT_THROW(sc.validate(), InputError);
  EXPECT_EQ(variant_label(Variant::exnex, 0.5), "EXNEX50");
  EXPECT_EQ(variant_label(Variant::strat, 0.5), "STRAT");
}

// The event defining the cutoff is always counted, whatever the rounding of
// arrival + event time.
TEST(Simulate, ExactlyRequiredEventsAtCutoff) {
  auto sc = base_scenario();
  for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(simulate_trial(sc, i).n_events, 110u) << "sim " << i;
}
