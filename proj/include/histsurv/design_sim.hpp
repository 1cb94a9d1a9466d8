#pragma once

// Operating characteristics of a two-arm trial analyzed with or without
// borrowing from historical controls.
//
// A simulated trial: patients arrive at a constant rate, are randomized in
// permuted blocks (T:C), and have exponential event times. The analysis
// takes place at the calendar time of the required_events-th event; anyone
// still event-free then is censored and anyone not yet enrolled is ignored.
// Exposure past the last grid boundary goes to the final interval.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "prior.hpp"
#include "random.hpp"
#include "sampler.hpp"
#include "summary.hpp"
#include "survival.hpp"

namespace histsurv {

enum class Variant { ex, exnex, strat };

inline std::string variant_label(Variant v, double exnex_weight) {
  switch (v) {
    case Variant::ex: return "EX";
    case Variant::strat: return "STRAT";
    default: return "EXNEX" + std::to_string(static_cast<int>(std::lround(100.0 * exnex_weight)));
  }
}

struct ScenarioConfig {
  double control_median = 150.0;  // grid time units
  double hazard_ratio = 1.0;
  unsigned ratio_treatment = 2;
  unsigned ratio_control = 1;
  double enrollment_rate = 1.0;   // patients per grid time unit
  std::size_t n_patients = 130;
  std::size_t required_events = 110;
  IntervalGrid grid;
  Variant variant = Variant::strat;
  double exnex_weight = 0.5;      // prior probability of exchangeability
  std::size_t n_sims = 200;
  std::uint64_t seed = 2019;
  double success_threshold = 0.975;
  SamplerConfig sampler{1, 1000, 2000, 1, 0, 0.44, 50, 1, false, false, 100};

  void validate() const {
    auto fail = [](const std::string& f, const std::string& why) { throw InputError("scenario." + f + ": " + why); };
    if (!(control_median > 0.0) || !std::isfinite(control_median)) fail("control_median", "must be > 0");
    if (!(hazard_ratio > 0.0) || !std::isfinite(hazard_ratio)) fail("hazard_ratio", "must be > 0");
    if (ratio_treatment + ratio_control == 0) fail("randomization", "needs at least one slot per block");
    if (!(enrollment_rate > 0.0) || !std::isfinite(enrollment_rate)) fail("enrollment_rate", "must be > 0");
    if (n_patients < 1) fail("n_patients", "must be >= 1");
    if (required_events < 1 || required_events > n_patients) fail("required_events", "must lie in [1, n_patients]");
    if (grid.size() < 1) fail("grid", "missing");
    if (variant == Variant::exnex && !(exnex_weight > 0.0 && exnex_weight < 1.0))
      fail("exnex_weight", "must lie in (0, 1)");
    if (n_sims < 1) fail("n_sims", "must be >= 1");
    if (!(success_threshold > 0.0 && success_threshold < 1.0)) fail("success_threshold", "must lie in (0, 1)");
    sampler.validate();
  }
};

struct SimulatedTrial {
  std::vector<ObservationRow> rows;  // study 0, covariate X (1 = treatment)
  double cutoff = 0.0;
  std::size_t n_enrolled = 0;
  std::size_t n_events = 0;
  double exposure = 0.0;
};

struct SimPatient {
  double arrival = 0.0;
  double event_time = 0.0;
  bool treatment = false;
};

// Arrivals, arms and event times of every planned patient.
inline std::vector<SimPatient> simulate_patients(const ScenarioConfig& sc, Random& rng) {
  const double lambda_c = std::log(2.0) / sc.control_median;
  const std::size_t block = sc.ratio_treatment + sc.ratio_control;
  std::vector<bool> slots;
  std::vector<SimPatient> out(sc.n_patients);
  for (std::size_t i = 0; i < sc.n_patients; ++i) {
    if (i % block == 0) {
      slots.assign(block, false);
      std::fill_n(slots.begin(), sc.ratio_treatment, true);
      for (std::size_t a = block; a > 1; --a) {
        const auto b = static_cast<std::size_t>(rng.uniform() * static_cast<double>(a));
        std::swap(slots[a - 1], slots[std::min(b, a - 1)]);
      }
    }
    out[i].arrival = static_cast<double>(i) / sc.enrollment_rate;
    out[i].treatment = slots[i % block];
    out[i].event_time = rng.exponential(out[i].treatment ? lambda_c * sc.hazard_ratio : lambda_c);
  }
  return out;
}

// Interval rows (per arm, per interval with exposure) at the event-driven cutoff.
inline SimulatedTrial tabulate_trial(const std::vector<SimPatient>& patients, const IntervalGrid& grid,
                                     std::size_t required_events) {
  std::vector<double> calendar;
  for (const auto& p : patients) calendar.push_back(p.arrival + p.event_time);
  std::nth_element(calendar.begin(), calendar.begin() + static_cast<std::ptrdiff_t>(required_events - 1),
                   calendar.end());
  SimulatedTrial trial;
  trial.cutoff = calendar[required_events - 1];

  const std::size_t K = grid.size();
  std::vector<double> exposure(2 * K, 0.0);
  std::vector<std::int64_t> events(2 * K, 0);
  for (const auto& p : patients) {
    if (p.arrival > trial.cutoff) continue;
    ++trial.n_enrolled;
    // Compare on the calendar scale so the cutoff event itself always counts.
    const bool event = p.arrival + p.event_time <= trial.cutoff;
    const double followup = event ? p.event_time : trial.cutoff - p.arrival;
    const std::size_t arm = p.treatment ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k) exposure[arm * K + k] += grid.overlap(k, followup);
    if (event) {
      std::size_t k = 0;
      while (k + 1 < K && followup > grid.upper(k)) ++k;
      ++events[arm * K + k];
      ++trial.n_events;
    }
    trial.exposure += followup;
  }
  for (std::size_t arm = 0; arm < 2; ++arm)
    for (std::size_t k = 0; k < K; ++k)
      if (exposure[arm * K + k] > 0.0)
        trial.rows.push_back({0, k, k, events[arm * K + k], exposure[arm * K + k], {static_cast<double>(arm)}});
  return trial;
}

inline SimulatedTrial simulate_trial(const ScenarioConfig& sc, std::size_t sim_index) {
  Random rng(derive_seed(sc.seed, sim_index));
  return tabulate_trial(simulate_patients(sc, rng), sc.grid, sc.required_events);
}

// Historical controls and the quantities derived from them once per
// scenario family: the EX prior center and the MAP prior mean per interval.
struct HistoricalContext {
  std::vector<ObservationRow> rows;  // studies 0..J-1, no covariates
  std::size_t n_studies = 0;
  double log_overall_hazard = 0.0;
  std::vector<double> map_mean;      // K, mean of theta* draws
};

// Prior used for the borrowing analyses of the historical studies alone.
inline PriorConfig historical_prior(const HistoricalContext& h, std::size_t K, std::size_t H) {
  PriorConfig p = default_prior(h.n_studies, K, H);
  p.mu_mean = {h.log_overall_hazard, 1.0};
  p.rho = {0.0, 1.0};
  return p;
}

inline HistoricalContext prepare_historical(std::vector<ObservationRow> rows, std::size_t n_studies,
                                            const IntervalGrid& grid, const SamplerConfig& map_sampler) {
  if (rows.empty() || n_studies == 0) throw InputError("historical data are required for borrowing variants");
  HistoricalContext h;
  h.rows = std::move(rows);
  h.n_studies = n_studies;
  double r = 0.0, e = 0.0;
  for (auto& row : h.rows) {
    if (!row.covariates.empty()) throw InputError("historical rows must not carry covariates");
    r += static_cast<double>(row.events);
    e += row.exposure;
  }
  h.log_overall_hazard = std::log((r + 0.5) / e);
  const MacModel model(grid, h.rows, n_studies, historical_prior(h, grid.size(), 0));
  const auto post = run(model, map_sampler);
  const auto draws = map_prior_draws(post, grid.size(), map_sampler.seed);
  h.map_mean.assign(grid.size(), 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t i = 0; i < draws.rows(); ++i) h.map_mean[k] += draws(i, k);
    h.map_mean[k] /= static_cast<double>(draws.rows());
  }
  return h;
}

// Model for one simulated trial. The new study is the last one (index J)
// for borrowing variants and the only one for STRAT.
inline MacModel analysis_model(const SimulatedTrial& trial, const HistoricalContext* hist, const IntervalGrid& grid,
                               Variant variant, double exnex_weight) {
  const std::size_t K = grid.size();
  if (variant == Variant::strat) {
    PriorConfig p = default_prior(1, K, 1);
    p.mu_mode = MuMode::unrelated;
    p.mu_unrelated.assign(K, NormalPrior{0.0, 10.0});
    return MacModel(grid, trial.rows, 1, std::move(p));
  }
  if (hist == nullptr) throw InputError("historical data are required for borrowing variants");
  const std::size_t J = hist->n_studies + 1;
  PriorConfig p = historical_prior(*hist, K, 1);
  p.nex_mean = Table<double>(J, K, 0.0);
  p.nex_sd = Table<double>(J, K, 1.0);
  p.p_exch = Table<double>(J, K, 1.0);
  p.tau_study_scale.assign(K, 0.5);
  if (variant == Variant::exnex) {
    for (std::size_t k = 0; k < K; ++k) {
      p.p_exch(J - 1, k) = exnex_weight;
      p.nex_mean(J - 1, k) = hist->map_mean[k];
    }
  }
  std::vector<ObservationRow> rows;
  rows.reserve(hist->rows.size() + trial.rows.size());
  for (auto r : hist->rows) {
    r.covariates = {0.0};
    rows.push_back(std::move(r));
  }
  for (auto r : trial.rows) {
    r.study = J - 1;
    rows.push_back(std::move(r));
  }
  return MacModel(grid, std::move(rows), J, std::move(p));
}

struct SimAnalysis {
  double success_probability = 0.0;
  bool success = false;
  double log_hr_median = 0.0;
};

inline SimAnalysis analyze_sim(const SimulatedTrial& trial, const HistoricalContext* hist, const ScenarioConfig& sc,
                               std::size_t sim_index) {
  try {
    const MacModel model = analysis_model(trial, hist, sc.grid, sc.variant, sc.exnex_weight);
    SamplerConfig cfg = sc.sampler;
    cfg.seed = derive_seed(derive_seed(sc.seed, sim_index), 0x414e41);
    const auto post = run(model, cfg);
    const auto beta = post.pooled(vec_name("beta", 0));
    const auto d = success_probability(beta, 0.0, sc.success_threshold);
    return {d.probability, d.success, quantile(beta, 0.5)};
  } catch (const std::exception& e) {
    throw SamplerError("simulation " + std::to_string(sim_index) + ": " + e.what());
  }
}

struct OcResult {
  std::size_t n_sims = 0;
  double success_rate = 0.0;
  double success_rate_se = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double rmse = 0.0;
  double rmse_se = 0.0;
  double mean_events = 0.0;
};

inline std::string oc_label(const ScenarioConfig& sc) { return sc.hazard_ratio == 1.0 ? "type-I" : "power"; }

// Sims run on up to `threads` workers (0: hardware concurrency); results are
// reduced in sim-index order.
inline OcResult operating_characteristics(const ScenarioConfig& sc, const HistoricalContext* hist,
                                          std::size_t threads = 0) {
  sc.validate();
  std::vector<SimAnalysis> res(sc.n_sims);
  std::vector<std::size_t> events(sc.n_sims);
  std::vector<std::exception_ptr> errors(sc.n_sims);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < sc.n_sims; i = next++) {
      try {
        const auto trial = simulate_trial(sc, i);
        events[i] = trial.n_events;
        res[i] = analyze_sim(trial, hist, sc, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, sc.n_sims);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double n = static_cast<double>(sc.n_sims);
  const double truth = std::log(sc.hazard_ratio);
  OcResult r;
  r.n_sims = sc.n_sims;
  double succ = 0.0, err = 0.0, sq = 0.0, sq2 = 0.0, err2 = 0.0, ev = 0.0;
  for (std::size_t i = 0; i < sc.n_sims; ++i) {
    const double e = res[i].log_hr_median - truth;
    succ += res[i].success ? 1.0 : 0.0;
    err += e;
    err2 += e * e;
    sq += e * e;
    sq2 += e * e * e * e;
    ev += static_cast<double>(events[i]);
  }
  r.success_rate = succ / n;
  r.success_rate_se = std::sqrt(r.success_rate * (1.0 - r.success_rate) / n);
  r.bias = err / n;
  r.mean_events = ev / n;
  const double mse = sq / n;
  r.rmse = std::sqrt(mse);
  if (sc.n_sims > 1) {
    r.bias_se = std::sqrt(std::max(0.0, (err2 - n * r.bias * r.bias) / (n - 1.0)) / n);
    const double mse_se = std::sqrt(std::max(0.0, (sq2 - n * mse * mse) / (n - 1.0)) / n);
    r.rmse_se = r.rmse > 0.0 ? mse_se / (2.0 * r.rmse) : 0.0;
  }
  return r;
}

}  // namespace histsurv
