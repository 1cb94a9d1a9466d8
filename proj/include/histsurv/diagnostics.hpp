#pragma once

// Convergence diagnostics for multi-chain MCMC output: rank-normalized
// split R-hat, bulk effective sample size and Monte Carlo standard error of
// the mean (Vehtari, Gelman, Simpson, Carpenter, Burkner 2021 conventions).

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <fftw3.h>

#include "common.hpp"

namespace histsurv {

struct Diagnostic {
  double rhat = 1.0;
  double ess_bulk = 0.0;
  double ess_mean = 0.0;
  double mcse = 0.0;
  bool degenerate = false;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Biased (divide by n) autocovariance at lags 0..n-1.
inline std::vector<double> autocovariance(std::span<const double> x) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> buf(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] - mean;
  std::vector<std::complex<double>> spec(m / 2 + 1);
  auto* cspec = reinterpret_cast<fftw_complex*>(spec.data());
  fftw_plan fwd, bwd;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(m), buf.data(), cspec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(static_cast<int>(m), cspec, buf.data(), FFTW_ESTIMATE);
  }
  fftw_execute(fwd);
  for (auto& c : spec) c = std::norm(c);
  fftw_execute(bwd);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  std::vector<double> acov(n);
  for (std::size_t t = 0; t < n; ++t) acov[t] = buf[t] / static_cast<double>(m) / static_cast<double>(n);
  return acov;
}

inline double sample_variance(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

// Split every chain in half (dropping the middle draw of odd lengths).
inline std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Pooled average ranks mapped through the normal quantile function.
inline std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  all.reserve(total);
  std::size_t idx = 0;
  for (const auto& c : chains)
    for (double v : c) all.emplace_back(v, idx++);
  std::sort(all.begin(), all.end());
  std::vector<double> rank(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && all[j + 1].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[all[t].second] = avg;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> stdnorm;
  std::vector<std::vector<double>> out;
  idx = 0;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (auto& v : z) v = boost::math::quantile(stdnorm, (rank[idx++] - 0.375) / (static_cast<double>(total) + 0.25));
    out.push_back(std::move(z));
  }
  return out;
}

inline double rhat_basic(const std::vector<std::vector<double>>& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(std::accumulate(c.begin(), c.end(), 0.0) / n);
    vars.push_back(sample_variance(c));
  }
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(vars.size());
  const double B_over_n = sample_variance(means);
  const double var_plus = W * (n - 1.0) / n + B_over_n;
  return std::sqrt(var_plus / W);
}

// Multi-chain ESS with Geyer's initial monotone sequence.
inline double ess_basic(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double dn = static_cast<double>(n);
  std::vector<double> acov_mean(n, 0.0), means;
  for (const auto& c : chains) {
    const auto a = autocovariance(c);
    for (std::size_t t = 0; t < n; ++t) acov_mean[t] += a[t] / static_cast<double>(m);
    means.push_back(std::accumulate(c.begin(), c.end(), 0.0) / dn);
  }
  const double mean_var = acov_mean[0] * dn / (dn - 1.0);
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) var_plus += sample_variance(means);

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - acov_mean[1]) / var_plus;
  rho[1] = rho_odd;
  std::size_t s = 1;
  while (s + 4 < n && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - acov_mean[s + 1]) / var_plus;
    rho_odd = 1.0 - (mean_var - acov_mean[s + 2]) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[s + 1] = rho_even;
      rho[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (rho_even > 0.0 && max_s + 1 < n) rho[max_s + 1] = rho_even;
  for (std::size_t t = 1; t + 3 <= max_s; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0;
  for (std::size_t t = 0; t <= max_s && t < n; ++t) tau += 2.0 * rho[t];
  if (max_s + 1 < n) tau += rho[max_s + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

inline bool is_constant(const std::vector<std::vector<double>>& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

inline bool every_chain_constant(const std::vector<std::vector<double>>& chains) {
  for (const auto& c : chains)
    if (!std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); })) return false;
  return true;
}

}  // namespace detail

// Requires >= 2 chains of equal length >= 100. ESS values are capped at the
// total number of draws.
inline Diagnostic diagnose(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InputError("diagnostics need at least 2 chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw InputError("diagnostics need chains of equal length");
  if (n < 100) throw InputError("diagnostics need at least 100 draws per chain");

  Diagnostic d;
  const double total = static_cast<double>(chains.size() * n);
  if (detail::is_constant(chains)) {
    d.degenerate = true;
    d.rhat = 1.0;
    d.ess_bulk = d.ess_mean = total;
    d.mcse = 0.0;
    return d;
  }
  const auto split = detail::split_chains(chains);
  if (detail::every_chain_constant(split)) {
    // Every half is stuck at its own value: no within-chain variance at all.
    d.degenerate = true;
    d.rhat = std::numeric_limits<double>::infinity();
    d.ess_bulk = d.ess_mean = 1.0;
  } else {
    const auto z = detail::rank_normalize(split);
    std::vector<std::vector<double>> folded = split;
    {
      std::vector<double> pooled;
      for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
      std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2), pooled.end());
      const double med = pooled[pooled.size() / 2];
      for (auto& c : folded)
        for (auto& v : c) v = std::abs(v - med);
    }
    const double rhat_bulk = detail::rhat_basic(z);
    const double rhat_tail = detail::every_chain_constant(folded) ? rhat_bulk
                                                                : detail::rhat_basic(detail::rank_normalize(folded));
    d.rhat = std::max(rhat_bulk, rhat_tail);
    d.ess_bulk = std::min(detail::ess_basic(z), total);
    d.ess_mean = std::min(detail::ess_basic(split), total);
  }
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  d.mcse = std::sqrt(detail::sample_variance(pooled) / std::max(d.ess_mean, 1.0));
  return d;
}

}  // namespace histsurv
