#pragma once

// Joint model for piecewise-exponential event counts across studies.
//
//   events_j  ~ Poisson(alpha_j),
//   alpha_j   = exposure_j * sum_k lambda_{s,k} L_k / sum_k L_k   over the row's span,
//   log lambda_{s,k} = theta_{s,k} + x_j' beta,
//   theta_{s,k} = z_{s,k} (mu_k + e_{s,k}) + (1 - z_{s,k}) nu_{s,k}
//
// with e_{s,k} ~ N(0, tau_k^2), tau_k half-normal, nu_{s,k} the
// non-exchangeable log-hazard, z_{s,k} ~ Bernoulli(p_exch), and mu_k either
// independent normals or the level/drift random walk
//
//   mu_1 ~ N(m0, tau_time^2),  mu_k ~ N(mu_{k-1} + rho_{k-1}, tau_time^2 / w).
//
// The Poisson log(r!) constant is dropped everywhere.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "prior.hpp"
#include "survival.hpp"

namespace histsurv {

struct ParameterState {
  double mu_mean_ex = 0.0;
  std::vector<double> mu_ex;      // K
  std::vector<double> rho;        // K - 1
  double w = 0.5;
  double tau_time = 1.0;
  std::vector<double> tau_study;  // K
  Table<double> re;               // J x K
  Table<std::uint8_t> z;          // J x K
  Table<double> mu_nex;           // J x K
  std::vector<double> beta;       // H

  bool operator==(const ParameterState&) const = default;
};

inline ParameterState make_state(std::size_t J, std::size_t K, std::size_t H) {
  ParameterState s;
  s.mu_ex.assign(K, 0.0);
  s.rho.assign(K > 0 ? K - 1 : 0, 0.0);
  s.tau_study.assign(K, 1.0);
  s.re = Table<double>(J, K, 0.0);
  s.z = Table<std::uint8_t>(J, K, 1);
  s.mu_nex = Table<double>(J, K, 0.0);
  s.beta.assign(H, 0.0);
  return s;
}

namespace dens {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

inline double half_normal(double x, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return std::numbers::ln2 + normal(x, 0.0, scale);
}

inline double lognormal(double x, double meanlog, double sdlog) {
  if (!(x > 0.0)) return kNegInf;
  const double lx = std::log(x);
  return normal(lx, meanlog, sdlog) - lx;
}

inline double uniform(double x, double lo, double hi) {
  if (!(x > lo && x < hi)) return kNegInf;
  return -std::log(hi - lo);
}

inline double bernoulli(std::uint8_t z, double p) {
  if (z) return p > 0.0 ? std::log(p) : kNegInf;
  return p < 1.0 ? std::log1p(-p) : kNegInf;
}

// r log(alpha) - alpha
inline double poisson(std::int64_t r, double alpha) {
  if (r == 0) return -alpha;
  return static_cast<double>(r) * std::log(alpha) - alpha;
}

}  // namespace dens

class MacModel {
 public:
  MacModel(IntervalGrid grid, std::vector<ObservationRow> rows, std::size_t n_studies, PriorConfig prior)
      : grid_(std::move(grid)), rows_(std::move(rows)), J_(n_studies), prior_(std::move(prior)) {
    K_ = grid_.size();
    H_ = prior_.n_covariates();
    if (prior_.n_studies() != J_ || prior_.n_intervals() != K_)
      throw InputError("prior configuration shape does not match data (studies x intervals)");
    prior_.validate();
    re_active_ = prior_.random_effects_active();
    cell_rows_.assign(J_ * K_, {});
    interval_rows_.assign(K_, {});
    covariate_rows_.assign(H_, {});
    weights_.resize(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& r = rows_[i];
      const std::string where = "observation row " + std::to_string(i + 1) + ": ";
      if (r.study >= J_) throw InputError(where + "study index beyond the number of studies");
      if (r.int_low > r.int_high || r.int_high >= K_) throw InputError(where + "interval span outside the grid");
      if (!(r.exposure > 0.0) || !std::isfinite(r.exposure)) throw InputError(where + "exposure must be positive");
      if (r.events < 0) throw InputError(where + "events must be nonnegative");
      if (r.covariates.size() != H_) throw InputError(where + "covariate count does not match prior.beta");
      double total = 0.0;
      for (std::size_t k = r.int_low; k <= r.int_high; ++k) total += grid_.length(k);
      for (std::size_t k = r.int_low; k <= r.int_high; ++k) {
        weights_[i].push_back(grid_.length(k) / total);
        cell_rows_[r.study * K_ + k].push_back(i);
        interval_rows_[k].push_back(i);
      }
      for (std::size_t h = 0; h < H_; ++h)
        if (r.covariates[h] != 0.0) covariate_rows_[h].push_back(i);
    }
  }

  const IntervalGrid& grid() const { return grid_; }
  const std::vector<ObservationRow>& rows() const { return rows_; }
  const PriorConfig& prior() const { return prior_; }
  std::size_t n_studies() const { return J_; }
  std::size_t n_intervals() const { return K_; }
  std::size_t n_covariates() const { return H_; }
  bool random_effects_active() const { return re_active_; }

  // Rows of study j whose span covers interval k.
  const std::vector<std::size_t>& cell_rows(std::size_t j, std::size_t k) const { return cell_rows_[j * K_ + k]; }
  const std::vector<std::size_t>& interval_rows(std::size_t k) const { return interval_rows_[k]; }
  // Rows with a nonzero value of covariate h.
  const std::vector<std::size_t>& covariate_rows(std::size_t h) const { return covariate_rows_[h]; }

  MacModel without_data() const { return MacModel(grid_, {}, J_, prior_); }

  // EX-branch log-hazard mu_k (+ e_jk when random effects are active).
  double theta_ex(const ParameterState& s, std::size_t j, std::size_t k) const {
    return re_active_ ? s.mu_ex[k] + s.re(j, k) : s.mu_ex[k];
  }

  double theta(const ParameterState& s, std::size_t j, std::size_t k) const {
    return s.z(j, k) ? theta_ex(s, j, k) : s.mu_nex(j, k);
  }

  double log_hazard(const ParameterState& s, std::size_t j, std::size_t k, std::span<const double> x) const {
    double v = theta(s, j, k);
    for (std::size_t h = 0; h < x.size(); ++h) v += x[h] * s.beta[h];
    return v;
  }

  double poisson_mean(const ParameterState& s, std::size_t row) const {
    const auto& r = rows_[row];
    double xb = 0.0;
    for (std::size_t h = 0; h < H_; ++h) xb += r.covariates[h] * s.beta[h];
    double avg = 0.0;
    for (std::size_t k = r.int_low; k <= r.int_high; ++k)
      avg += weights_[row][k - r.int_low] * std::exp(theta(s, r.study, k) + xb);
    return avg * r.exposure;
  }

  double row_log_likelihood(const ParameterState& s, std::size_t row) const {
    return dens::poisson(rows_[row].events, poisson_mean(s, row));
  }

  double rows_log_likelihood(const ParameterState& s, std::span<const std::size_t> idx) const {
    double ll = 0.0;
    for (auto i : idx) ll += row_log_likelihood(s, i);
    return ll;
  }

  double log_likelihood(const ParameterState& s) const {
    double ll = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double a = poisson_mean(s, i);
      if (!std::isfinite(a)) throw std::domain_error("non-finite Poisson mean in row " + std::to_string(i + 1));
      ll += dens::poisson(rows_[i].events, a);
    }
    return ll;
  }

  // Prior terms of mu_k (and only those) under the current structure.
  double mu_log_prior_local(const ParameterState& s, std::size_t k) const {
    if (prior_.mu_mode == MuMode::unrelated)
      return dens::normal(s.mu_ex[k], prior_.mu_unrelated[k].mean, prior_.mu_unrelated[k].sd);
    const double step_sd = s.tau_time / std::sqrt(s.w);
    double lp = k == 0 ? dens::normal(s.mu_ex[0], s.mu_mean_ex, s.tau_time)
                       : dens::normal(s.mu_ex[k], s.mu_ex[k - 1] + s.rho[k - 1], step_sd);
    if (k + 1 < K_) lp += dens::normal(s.mu_ex[k + 1], s.mu_ex[k] + s.rho[k], step_sd);
    return lp;
  }

  // Random-walk terms linking mu_1..mu_K (zero in unrelated mode).
  double ndlm_log_density(const ParameterState& s) const {
    if (prior_.mu_mode == MuMode::unrelated) return 0.0;
    double lp = dens::normal(s.mu_ex[0], s.mu_mean_ex, s.tau_time);
    const double step_sd = s.tau_time / std::sqrt(s.w);
    for (std::size_t k = 1; k < K_; ++k) lp += dens::normal(s.mu_ex[k], s.mu_ex[k - 1] + s.rho[k - 1], step_sd);
    return lp;
  }

  double log_prior(const ParameterState& s) const {
    using dens::kNegInf;
    const auto& p = prior_;
    double lp = dens::normal(s.mu_mean_ex, p.mu_mean.mean, p.mu_mean.sd);
    for (double r : s.rho) lp += dens::normal(r, p.rho.mean, p.rho.sd);
    lp += dens::uniform(s.w, p.w_lower, p.w_upper);
    lp += dens::lognormal(s.tau_time, p.tau_time.mean, p.tau_time.sd);
    if (lp == kNegInf) return kNegInf;
    if (p.mu_mode == MuMode::ndlm) {
      lp += ndlm_log_density(s);
    } else {
      for (std::size_t k = 0; k < K_; ++k) lp += dens::normal(s.mu_ex[k], p.mu_unrelated[k].mean, p.mu_unrelated[k].sd);
    }
    for (std::size_t k = 0; k < K_; ++k) {
      const double t = s.tau_study[k];
      lp += dens::half_normal(t, p.tau_study_scale[k]);
      if (lp == kNegInf) return kNegInf;
      for (std::size_t j = 0; j < J_; ++j) {
        lp += dens::normal(s.re(j, k), 0.0, t);
        lp += dens::bernoulli(s.z(j, k), p.p_exch(j, k));
        lp += dens::normal(s.mu_nex(j, k), p.nex_mean(j, k), p.nex_sd(j, k));
      }
    }
    for (std::size_t h = 0; h < H_; ++h) lp += dens::normal(s.beta[h], p.beta[h].mean, p.beta[h].sd);
    return lp;
  }

  double log_joint(const ParameterState& s) const {
    const double lp = log_prior(s);
    if (lp == dens::kNegInf) return lp;
    return lp + log_likelihood(s);
  }

 private:
  IntervalGrid grid_;
  std::vector<ObservationRow> rows_;
  std::size_t J_ = 0, K_ = 0, H_ = 0;
  PriorConfig prior_;
  bool re_active_ = true;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<std::size_t>> cell_rows_;
  std::vector<std::vector<std::size_t>> interval_rows_;
  std::vector<std::vector<std::size_t>> covariate_rows_;
};

}  // namespace histsurv
