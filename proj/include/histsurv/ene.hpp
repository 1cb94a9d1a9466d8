#pragma once

// Prior effective number of events.
//
// Each interval's MAP-prior sample of theta*_k is approximated by a normal
// mixture (EM, 1..4 components, order chosen by penalized AIC). Its ELIR
// effective sample size is the prior expectation of the local information
// -d^2 log p / d theta^2 divided by the Fisher information of one event,
// which is 1 on the log-hazard scale. ENE sums these over intervals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "common.hpp"
#include "random.hpp"

namespace histsurv {

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double sd = 1.0;
};

class NormalMixture {
 public:
  NormalMixture() = default;
  explicit NormalMixture(std::vector<MixtureComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty() || comps_.size() > 4) throw InputError("a normal mixture has 1 to 4 components");
    double total = 0.0;
    for (const auto& c : comps_) {
      if (!(c.weight > 0.0) || !(c.sd > 0.0) || !std::isfinite(c.mean))
        throw InputError("mixture weights and sds must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InputError("mixture weights must sum to 1");
  }

  std::span<const MixtureComponent> components() const { return comps_; }
  std::size_t size() const { return comps_.size(); }

  double mean() const {
    double m = 0.0;
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
  }

  double sd() const {
    const double m = mean();
    double v = 0.0;
    for (const auto& c : comps_) v += c.weight * (c.sd * c.sd + (c.mean - m) * (c.mean - m));
    return std::sqrt(v);
  }

  double log_density(double x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(comps_.size());
    for (const auto& c : comps_) {
      const double z = (x - c.mean) / c.sd;
      terms.push_back(std::log(c.weight) - std::log(c.sd) - 0.91893853320467274178 - 0.5 * z * z);
      best = std::max(best, terms.back());
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
  }

  double density(double x) const { return std::exp(log_density(x)); }

  // -d^2/dx^2 log p(x) = (p'/p)^2 - p''/p, from component responsibilities.
  double information(double x) const {
    const double lp = log_density(x);
    double d1 = 0.0, d2 = 0.0;
    for (const auto& c : comps_) {
      const double z = (x - c.mean) / c.sd;
      const double r = std::exp(std::log(c.weight) - std::log(c.sd) - 0.91893853320467274178 - 0.5 * z * z - lp);
      const double v = c.sd * c.sd;
      d1 += r * (-(x - c.mean) / v);
      d2 += r * ((x - c.mean) * (x - c.mean) / (v * v) - 1.0 / v);
    }
    return d1 * d1 - d2;
  }

  double sample(Random& rng) const {
    double u = rng.uniform();
    for (const auto& c : comps_) {
      if (u < c.weight) return rng.normal(c.mean, c.sd);
      u -= c.weight;
    }
    return rng.normal(comps_.back().mean, comps_.back().sd);
  }

  NormalMixture shifted(double by) const {
    auto c = comps_;
    for (auto& x : c) x.mean += by;
    return NormalMixture(std::move(c));
  }

 private:
  std::vector<MixtureComponent> comps_;
};

struct MixtureFitOptions {
  std::size_t max_components = 4;
  std::size_t min_draws = 1000;
  double aic_penalty = 6.0;  // per free parameter
  std::size_t restarts = 3;
  std::size_t max_iterations = 1000;
  double tolerance = 1e-9;         // relative change of the log-likelihood
  double param_tolerance = 1e-4;   // largest parameter change, in sample sds
  std::uint64_t seed = 20190801;
};

struct MixtureFit {
  NormalMixture mixture;
  double log_likelihood = 0.0;
  double aic = 0.0;
};

namespace detail {

inline double mixture_log_likelihood(const std::vector<MixtureComponent>& comps, std::span<const double> x) {
  const NormalMixture m(comps);
  double ll = 0.0;
  for (double v : x) ll += m.log_density(v);
  return ll;
}

// Plain EM from the given start; false if a component collapses or the
// iteration limit is hit. `scale` is the sample sd.
inline bool run_em(std::vector<MixtureComponent>& comps, std::span<const double> x, const MixtureFitOptions& opt,
                   double scale, double& ll_out) {
  const double sd_floor = 1e-6 * scale;
  const std::size_t n = x.size(), c = comps.size();
  std::vector<double> resp(n * c), log_norm(c), inv_sd(c);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    for (std::size_t j = 0; j < c; ++j) {
      log_norm[j] = std::log(comps[j].weight) - std::log(comps[j].sd);
      inv_sd[j] = 1.0 / comps[j].sd;
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < c; ++j) {
        const double z = (x[i] - comps[j].mean) * inv_sd[j];
        resp[i * c + j] = log_norm[j] - 0.5 * z * z;
        best = std::max(best, resp[i * c + j]);
      }
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += (resp[i * c + j] = std::exp(resp[i * c + j] - best));
      for (std::size_t j = 0; j < c; ++j) resp[i * c + j] /= s;
      ll += best + std::log(s) - 0.91893853320467274178;
    }
    double change = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double nj = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) nj += resp[i * c + j], sx += resp[i * c + j] * x[i];
      if (nj < 1e-8 * static_cast<double>(n)) return false;
      const double mean = sx / nj;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += resp[i * c + j] * (x[i] - mean) * (x[i] - mean);
      const MixtureComponent next{nj / static_cast<double>(n), mean, std::max(std::sqrt(ss / nj), sd_floor)};
      change = std::max({change, std::abs(next.weight - comps[j].weight), std::abs(next.mean - comps[j].mean) / scale,
                         std::abs(next.sd - comps[j].sd) / scale});
      comps[j] = next;
    }
    if (std::abs(ll - prev) <= opt.tolerance * std::abs(ll) || change < opt.param_tolerance) {
      ll_out = mixture_log_likelihood(comps, x);
      return std::isfinite(ll_out);
    }
    prev = ll;
  }
  return false;
}

}  // namespace detail

// EM fits with 1..max_components components; the order minimizing
// -2 logL + penalty * (3c - 1) wins, ties going to fewer components.
inline MixtureFit fit_mixture(std::span<const double> draws, const MixtureFitOptions& opt = {}) {
  if (draws.size() < opt.min_draws)
    throw InputError("mixture fit needs at least " + std::to_string(opt.min_draws) + " draws");
  const double n = static_cast<double>(draws.size());
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0) || !std::isfinite(sd)) throw InputError("mixture fit on a degenerate (constant) sample");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());

  const std::vector<MixtureComponent> single{{1.0, mean, sd}};
  const double ll1 = detail::mixture_log_likelihood(single, draws);
  MixtureFit best{NormalMixture(single), ll1, opt.aic_penalty * 2.0 - 2.0 * ll1};

  Random rng(opt.seed);
  for (std::size_t c = 2; c <= std::min<std::size_t>(opt.max_components, 4); ++c) {
    double best_ll = -std::numeric_limits<double>::infinity();
    std::vector<MixtureComponent> best_comps;
    for (std::size_t r = 0; r < opt.restarts; ++r) {
      std::vector<MixtureComponent> comps(c);
      for (std::size_t j = 0; j < c; ++j) {
        double center;
        if (r == 0) {
          const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(c);
          center = sorted[static_cast<std::size_t>(q * (n - 1.0))];
        } else {
          center = draws[static_cast<std::size_t>(rng.uniform() * n) % draws.size()];
        }
        comps[j] = {1.0 / static_cast<double>(c), center, sd / static_cast<double>(r == 0 ? c : 1)};
      }
      double ll = 0.0;
      if (detail::run_em(comps, draws, opt, sd, ll) && ll > best_ll) {
        best_ll = ll;
        best_comps = comps;
      }
    }
    if (best_comps.empty() || best_ll < ll1) continue;
    const double aic = opt.aic_penalty * static_cast<double>(3 * c - 1) - 2.0 * best_ll;
    if (aic < best.aic) {
      double total = 0.0;
      for (const auto& x : best_comps) total += x.weight;
      for (auto& x : best_comps) x.weight /= total;
      best = {NormalMixture(best_comps), best_ll, aic};
    }
  }
  return best;
}

// ESS_ELIR = integral of information(x) * p(x) over the mixture's support,
// by adaptive Gauss-Kronrod quadrature.
inline double ess_elir(const NormalMixture& m, double rel_tol = 1e-6) {
  double lo = m.mean() - 10.0 * m.sd(), hi = m.mean() + 10.0 * m.sd();
  for (const auto& c : m.components()) {
    lo = std::min(lo, c.mean - 10.0 * c.sd);
    hi = std::max(hi, c.mean + 10.0 * c.sd);
  }
  auto integrand = [&](double x) { return m.information(x) * m.density(x); };
  double error = 0.0;
  // Split at component means so narrow peaks are never straddled blindly.
  std::vector<double> cuts{lo, hi};
  for (const auto& c : m.components()) cuts.push_back(c.mean);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0, total_err = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, cuts[i], cuts[i + 1], 20,
                                                                          rel_tol, &error);
    total_err += error;
  }
  if (!std::isfinite(total) || total_err > 1e3 * rel_tol * std::max(1.0, std::abs(total)))
    throw std::runtime_error("ELIR quadrature did not converge");
  return total;
}

// Monte Carlo estimate of the same expectation; used as a cross-check.
inline double ess_elir_monte_carlo(const NormalMixture& m, std::size_t n, std::uint64_t seed) {
  Random rng(seed);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += m.information(m.sample(rng));
  return s / static_cast<double>(n);
}

inline double total_ene(std::span<const NormalMixture> mixtures) {
  double total = 0.0;
  for (const auto& m : mixtures) total += ess_elir(m);
  return total;
}

}  // namespace histsurv
