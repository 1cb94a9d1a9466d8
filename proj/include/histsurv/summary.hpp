#pragma once

// Posterior summaries: MAP-prior draws for a new study, survival-rate and
// median-survival tables, and Bayesian success probabilities.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "random.hpp"
#include "sampler.hpp"
#include "survival.hpp"

namespace histsurv {

// Type-7 (linear interpolation) quantile of sorted values.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

struct SummaryStats {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline SummaryStats summarize(std::vector<double> values, double lower_p = 0.025, double upper_p = 0.975) {
  if (values.empty()) throw InputError("summary of an empty sample");
  std::sort(values.begin(), values.end());
  SummaryStats s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.median = quantile_sorted(values, 0.5);
  s.lower = quantile_sorted(values, lower_p);
  s.upper = quantile_sorted(values, upper_p);
  return s;
}

struct SummaryTable {
  double lower_p = 0.025;
  double upper_p = 0.975;
  std::vector<std::pair<std::string, SummaryStats>> rows;

  const SummaryStats& at(const std::string& name) const {
    for (const auto& [n, s] : rows)
      if (n == name) return s;
    throw InputError("no summary row '" + name + "'");
  }
};

// Draws x K log-hazards of study j (0-based) from the monitored theta[j,k].
inline Table<double> theta_draws(const PosteriorSample& post, std::size_t study, std::size_t n_intervals) {
  const std::size_t n = post.n_chains() * post.n_draws();
  Table<double> out(n, n_intervals);
  for (std::size_t k = 0; k < n_intervals; ++k) {
    const auto col = post.pooled(cell_name("theta", study, k));
    for (std::size_t i = 0; i < n; ++i) out(i, k) = col[i];
  }
  return out;
}

// Predictive log-hazards of a new, exchangeable study: per retained draw,
// theta*_k = mu_k + e_k with a fresh e_k ~ N(0, tau_k^2).
inline Table<double> map_prior_draws(const PosteriorSample& post, std::size_t n_intervals, std::uint64_t seed) {
  const std::size_t n = post.n_chains() * post.n_draws();
  Table<double> out(n, n_intervals);
  Random rng(derive_seed(seed, 0x4d4150));
  std::vector<std::vector<double>> mu, tau;
  for (std::size_t k = 0; k < n_intervals; ++k) {
    mu.push_back(post.pooled(vec_name("mu_ex", k)));
    tau.push_back(post.pooled(vec_name("tau_study", k)));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n_intervals; ++k) out(i, k) = mu[k][i] + tau[k][i] * rng.normal();
  return out;
}

inline std::string survival_label(double t) { return "S(" + format_double(t) + ")"; }

// Per draw: hazards exp(theta), survival at each requested time and the
// median survival time; then summarized across draws.
inline SummaryTable survival_summary(const Table<double>& theta, const IntervalGrid& grid,
                                     std::span<const double> times, double lower_p = 0.025,
                                     double upper_p = 0.975) {
  if (theta.cols() != grid.size()) throw InputError("log-hazard draws do not match the grid");
  for (double t : times)
    if (!(t >= 0.0)) throw InputError("survival times must be nonnegative");
  const std::size_t n = theta.rows();
  std::vector<std::vector<double>> surv(times.size(), std::vector<double>(n));
  std::vector<double> medians(n);
  std::vector<double> rates(grid.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < grid.size(); ++k) rates[k] = std::exp(theta(i, k));
    for (std::size_t t = 0; t < times.size(); ++t) surv[t][i] = survival_at(grid, rates, times[t]);
    medians[i] = median_survival(grid, rates);
  }
  SummaryTable table;
  table.lower_p = lower_p;
  table.upper_p = upper_p;
  for (std::size_t t = 0; t < times.size(); ++t)
    table.rows.emplace_back(survival_label(times[t]), summarize(std::move(surv[t]), lower_p, upper_p));
  table.rows.emplace_back("median_survival", summarize(std::move(medians), lower_p, upper_p));
  return table;
}

// Per-draw table whose survival-rate bounds are instead composed from
// per-interval marginal hazard quantiles,
//   S_q(t) = exp(-sum_k Q_{1-q}(lambda_k) * overlap_k(t)).
// These bounds are wider than the joint posterior interval of S(t); they
// reproduce the interval convention of published WinBUGS-era tables.
inline SummaryTable composed_survival_summary(const Table<double>& theta, const IntervalGrid& grid,
                                              std::span<const double> times, double lower_p = 0.025,
                                              double upper_p = 0.975) {
  const SummaryTable per_draw = survival_summary(theta, grid, times, lower_p, upper_p);
  const std::size_t K = grid.size();
  std::vector<double> q_lo(K), q_hi(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> lam(theta.rows());
    for (std::size_t i = 0; i < theta.rows(); ++i) lam[i] = std::exp(theta(i, k));
    std::sort(lam.begin(), lam.end());
    q_lo[k] = quantile_sorted(lam, lower_p);
    q_hi[k] = quantile_sorted(lam, upper_p);
  }
  SummaryTable table = per_draw;
  for (std::size_t t = 0; t < times.size(); ++t) {
    auto& s = table.rows[t].second;
    s.lower = survival_at(grid, q_hi, times[t]);
    s.upper = survival_at(grid, q_lo, times[t]);
  }
  return table;
}

struct PlotPoint {
  double time;
  double median;
  double lower;
  double upper;
};

// Pointwise survival band on the given time points.
inline std::vector<PlotPoint> survival_band(const Table<double>& theta, const IntervalGrid& grid,
                                            std::span<const double> times, double lower_p = 0.025,
                                            double upper_p = 0.975) {
  std::vector<PlotPoint> out;
  std::vector<double> rates(grid.size());
  std::vector<std::vector<double>> all(times.size(), std::vector<double>(theta.rows()));
  for (std::size_t i = 0; i < theta.rows(); ++i) {
    for (std::size_t k = 0; k < grid.size(); ++k) rates[k] = std::exp(theta(i, k));
    for (std::size_t t = 0; t < times.size(); ++t) all[t][i] = survival_at(grid, rates, times[t]);
  }
  for (std::size_t t = 0; t < times.size(); ++t) {
    std::sort(all[t].begin(), all[t].end());
    out.push_back({times[t], quantile_sorted(all[t], 0.5), quantile_sorted(all[t], lower_p),
                   quantile_sorted(all[t], upper_p)});
  }
  return out;
}

struct SuccessDecision {
  double probability = 0.0;
  bool success = false;
};

// Posterior mass strictly below the cutoff, and the decision probability > threshold.
inline SuccessDecision success_probability(std::span<const double> draws, double cutoff = 0.0,
                                           double threshold = 0.975) {
  if (draws.empty()) throw InputError("success probability of an empty sample");
  const auto below = std::count_if(draws.begin(), draws.end(), [&](double b) { return b < cutoff; });
  SuccessDecision d;
  d.probability = static_cast<double>(below) / static_cast<double>(draws.size());
  d.success = d.probability > threshold;
  return d;
}

}  // namespace histsurv
