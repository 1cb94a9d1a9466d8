#pragma once

// Metropolis-within-Gibbs sampler for MacModel.
//
// One sweep visits, in order:
//   e_jk        random-walk Metropolis when it enters the likelihood, else an
//               exact draw from N(0, tau_k^2)
//   mu_k        random-walk Metropolis (e held fixed), then an exact Gaussian
//               draw with mu_k + e_jk held fixed for every study
//   mu_mean_ex, rho_k   exact Gaussian full conditionals
//   tau_time (log scale), w (logit scale)     random-walk Metropolis
//   tau_k (log scale)   with e held fixed, and again with e / tau_k held fixed
//   beta_h      random-walk Metropolis
//   z_jk        exact Bernoulli full conditional
//   nu_jk       exact prior draw when z_jk = 1, random-walk Metropolis else
//
// Random-walk scales adapt (Robbins-Monro on the log scale, toward the
// target acceptance rate) during burn-in only.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "diagnostics.hpp"
#include "model.hpp"
#include "random.hpp"

namespace histsurv {

struct SamplerConfig {
  std::size_t n_chains = 3;
  std::size_t n_burnin = 8000;
  std::size_t n_iter = 8000;  // post burn-in iterations per chain
  std::size_t thin = 1;
  std::uint64_t seed = 12;
  double adapt_target = 0.44;
  std::size_t adapt_window = 50;
  std::size_t threads = 0;      // 0: one worker per chain
  bool prior_only = false;      // drop the likelihood
  bool monitor_latent = true;   // also record e_jk and nu_jk
  std::size_t max_init_attempts = 100;

  void validate() const {
    auto fail = [](const std::string& f, const std::string& why) { throw InputError("sampler." + f + ": " + why); };
    if (n_chains < 1) fail("n_chains", "must be >= 1");
    if (n_iter < 1) fail("n_iter", "must be >= 1");
    if (thin < 1) fail("thin", "must be >= 1");
    if (adapt_window < 1) fail("adapt_window", "must be >= 1");
    if (!(adapt_target > 0.0 && adapt_target < 1.0)) fail("adapt_target", "must lie in (0, 1)");
    if (max_init_attempts < 1) fail("max_init_attempts", "must be >= 1");
  }

  std::size_t n_retained() const { return n_iter / thin; }
};

inline SamplerConfig sampler_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& f, const std::string& why) { throw InputError("sampler." + f + ": " + why); };
  if (!j.is_object()) fail("<root>", "expected a JSON object");
  SamplerConfig c;
  auto count = [&](const std::string& key, std::size_t& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer() || j[key].get<long long>() < 0) fail(key, "expected a nonnegative integer");
    out = j[key].get<std::size_t>();
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known{"schema_version", "n_chains",       "n_burnin",     "n_iter",
                                                "thin",           "seed",           "adapt_target", "adapt_window",
                                                "threads",        "prior_only",     "monitor_latent",
                                                "max_init_attempts", "comment"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) fail(it.key(), "unknown field");
  }
  if (j.contains("schema_version") && j["schema_version"] != 1) fail("schema_version", "unsupported version (expected 1)");
  count("n_chains", c.n_chains);
  count("n_burnin", c.n_burnin);
  count("n_iter", c.n_iter);
  count("thin", c.thin);
  count("adapt_window", c.adapt_window);
  count("threads", c.threads);
  count("max_init_attempts", c.max_init_attempts);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) fail("seed", "expected an integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("adapt_target")) {
    if (!j["adapt_target"].is_number()) fail("adapt_target", "expected a number");
    c.adapt_target = j["adapt_target"].get<double>();
  }
  for (const char* key : {"prior_only", "monitor_latent"}) {
    if (!j.contains(key)) continue;
    if (!j[key].is_boolean()) fail(key, "expected true or false");
    (std::string(key) == "prior_only" ? c.prior_only : c.monitor_latent) = j[key].get<bool>();
  }
  c.validate();
  return c;
}

inline nlohmann::json sampler_to_json(const SamplerConfig& c) {
  return {{"schema_version", 1}, {"n_chains", c.n_chains},       {"n_burnin", c.n_burnin},
          {"n_iter", c.n_iter},  {"thin", c.thin},               {"seed", c.seed},
          {"adapt_target", c.adapt_target}, {"adapt_window", c.adapt_window}, {"threads", c.threads},
          {"prior_only", c.prior_only},     {"monitor_latent", c.monitor_latent},
          {"max_init_attempts", c.max_init_attempts}};
}

struct PosteriorSample {
  std::vector<std::string> names;
  std::vector<Table<double>> chains;       // per chain: retained draw x quantity
  std::vector<Diagnostic> diagnostics;     // per quantity; empty when not computable
  std::vector<std::vector<std::pair<std::string, double>>> acceptance;  // per chain, per block

  std::size_t n_chains() const { return chains.size(); }
  std::size_t n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  std::size_t index(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw InputError("quantity '" + name + "' was not monitored");
  }

  std::vector<std::vector<double>> by_chain(std::size_t q) const {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
      std::vector<double> v(c.rows());
      for (std::size_t i = 0; i < c.rows(); ++i) v[i] = c(i, q);
      out.push_back(std::move(v));
    }
    return out;
  }

  std::vector<double> pooled(std::size_t q) const {
    std::vector<double> out;
    for (const auto& c : chains)
      for (std::size_t i = 0; i < c.rows(); ++i) out.push_back(c(i, q));
    return out;
  }
  std::vector<double> pooled(const std::string& name) const { return pooled(index(name)); }

  // Non-degenerate quantities whose R-hat reaches the threshold.
  std::vector<std::string> convergence_warnings(double rhat_threshold = 1.05) const {
    std::vector<std::string> out;
    for (std::size_t q = 0; q < diagnostics.size(); ++q) {
      const auto& d = diagnostics[q];
      if (names[q].rfind("z[", 0) == 0) continue;  // indicators: see README
      if (!(d.rhat < rhat_threshold))
        out.push_back(names[q] + ": R-hat " + std::to_string(d.rhat) + " >= " + std::to_string(rhat_threshold));
    }
    return out;
  }
};

inline std::string cell_name(const char* base, std::size_t j, std::size_t k) {
  return std::string(base) + "[" + std::to_string(j + 1) + "," + std::to_string(k + 1) + "]";
}
inline std::string vec_name(const char* base, std::size_t k) {
  return std::string(base) + "[" + std::to_string(k + 1) + "]";
}

// Monitored quantity names, in column order.
inline std::vector<std::string> monitor_names(const MacModel& m, bool latent) {
  const std::size_t J = m.n_studies(), K = m.n_intervals(), H = m.n_covariates();
  std::vector<std::string> n{"log_joint", "mu_mean_ex"};
  for (std::size_t k = 0; k < K; ++k) n.push_back(vec_name("mu_ex", k));
  for (std::size_t k = 0; k + 1 < K; ++k) n.push_back(vec_name("rho", k));
  n.push_back("w");
  n.push_back("tau_time");
  for (std::size_t k = 0; k < K; ++k) n.push_back(vec_name("tau_study", k));
  for (std::size_t h = 0; h < H; ++h) n.push_back(vec_name("beta", h));
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t k = 0; k < K; ++k) n.push_back(cell_name("theta", j, k));
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t k = 0; k < K; ++k) n.push_back(cell_name("z", j, k));
  if (latent) {
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) n.push_back(cell_name("re", j, k));
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) n.push_back(cell_name("mu_nex", j, k));
  }
  return n;
}

// P(z_jk = 1 | everything else). Prior terms of e_jk and nu_jk do not
// depend on z_jk, so only p_exch and the cell's rows matter.
inline double z_full_conditional(const MacModel& m, ParameterState& s, std::size_t j, std::size_t k) {
  const double p = m.prior().p_exch(j, k);
  if (p >= 1.0) return 1.0;
  if (p <= 0.0) return 0.0;
  const auto& rows = m.cell_rows(j, k);
  const auto saved = s.z(j, k);
  s.z(j, k) = 1;
  const double ll1 = m.rows_log_likelihood(s, rows);
  s.z(j, k) = 0;
  const double ll0 = m.rows_log_likelihood(s, rows);
  s.z(j, k) = saved;
  const double log_odds = std::log(p) - std::log1p(-p) + ll1 - ll0;
  return 1.0 / (1.0 + std::exp(-log_odds));
}

// Gibbs update of every free indicator; pinned cells (p_exch 0 or 1) are
// set to their forced value.
inline void update_z(const MacModel& m, ParameterState& s, Random& rng) {
  for (std::size_t j = 0; j < m.n_studies(); ++j)
    for (std::size_t k = 0; k < m.n_intervals(); ++k) {
      const double p1 = z_full_conditional(m, s, j, k);
      s.z(j, k) = p1 >= 1.0 ? 1 : p1 <= 0.0 ? 0 : static_cast<std::uint8_t>(rng.uniform() < p1);
    }
}

// Starting point: hazards near the crude pooled rate (sum r + 0.5) / sum E,
// unit-scale gamma draws for the standard deviations, small drifts.
inline ParameterState initial_state(const MacModel& m, Random& rng) {
  const std::size_t J = m.n_studies(), K = m.n_intervals(), H = m.n_covariates();
  const auto& p = m.prior();
  double events = 0.0, exposure = 0.0;
  for (const auto& r : m.rows()) {
    events += static_cast<double>(r.events);
    exposure += r.exposure;
  }
  const double center = exposure > 0.0 ? std::log((events + 0.5) / exposure)
                        : p.mu_mode == MuMode::ndlm ? p.mu_mean.mean
                                                    : p.mu_unrelated[0].mean;
  ParameterState s = make_state(J, K, H);
  s.mu_mean_ex = rng.normal(center, 0.1);
  for (auto& r : s.rho) r = rng.normal(0.0, 0.05);
  s.mu_ex[0] = rng.normal(center, 0.25);
  for (std::size_t k = 1; k < K; ++k)
    s.mu_ex[k] = p.mu_mode == MuMode::ndlm ? s.mu_ex[k - 1] + s.rho[k - 1] : rng.normal(center, 0.25);
  for (auto& t : s.tau_study) t = rng.gamma(1.0, 1.0);
  s.tau_time = rng.gamma(1.0, 1.0);
  s.w = rng.uniform(p.w_lower, p.w_upper);
  for (auto& b : s.beta) b = rng.normal(0.0, 1.0);
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t k = 0; k < K; ++k) {
      const double pe = p.p_exch(j, k);
      s.z(j, k) = pe >= 1.0 ? 1 : pe <= 0.0 ? 0 : static_cast<std::uint8_t>(rng.bernoulli(pe));
      s.mu_nex(j, k) = p.nex_mean(j, k);
      s.re(j, k) = 0.0;
    }
  return s;
}

namespace detail {

struct RandomWalk {
  double log_scale = std::log(0.5);
  std::size_t accepted = 0;
  std::size_t tried = 0;
  std::size_t total_accepted = 0;
  std::size_t total_tried = 0;
};

class ChainRunner {
 public:
  ChainRunner(const MacModel& model, const SamplerConfig& cfg, std::uint64_t seed)
      : m_(model), cfg_(cfg), rng_(seed), J_(model.n_studies()), K_(model.n_intervals()), H_(model.n_covariates()) {
    re_.resize(J_ * K_);
    mu_.resize(K_);
    tau_c_.resize(K_);
    tau_nc_.resize(K_);
    beta_.resize(H_);
    nex_.resize(J_ * K_);
  }

  void initialize() {
    for (std::size_t attempt = 0; attempt < cfg_.max_init_attempts; ++attempt) {
      s_ = initial_state(m_, rng_);
      if (std::isfinite(m_.log_joint(s_))) return;
    }
    throw SamplerError("no finite starting point after " + std::to_string(cfg_.max_init_attempts) + " attempts");
  }

  const ParameterState& state() const { return s_; }
  ParameterState& state() { return s_; }

  void sweep() {
    update_random_effects();
    update_mu();
    update_mu_centered();
    update_mu_mean_and_rho();
    update_tau_time();
    update_w();
    update_tau_study();
    update_beta();
    update_z(m_, s_, rng_);
    update_mu_nex();
  }

  // End of an adaptation window (burn-in only).
  void adapt(std::size_t batch) {
    const double gain = std::min(1.0, 3.0 / std::sqrt(static_cast<double>(batch)));
    auto tune = [&](RandomWalk& rw, const std::string& label) {
      if (rw.tried > 0) {
        const double rate = static_cast<double>(rw.accepted) / static_cast<double>(rw.tried);
        rw.log_scale += gain * (rate - cfg_.adapt_target);
        if (rw.log_scale < std::log(1e-10))
          throw SamplerError("proposal scale collapsed for " + label + " (every proposal rejected)");
      }
      rw.accepted = rw.tried = 0;
    };
    for (auto& rw : re_) tune(rw, "re");
    for (auto& rw : mu_) tune(rw, "mu_ex");
    for (auto& rw : tau_c_) tune(rw, "tau_study");
    for (auto& rw : tau_nc_) tune(rw, "tau_study");
    for (auto& rw : beta_) tune(rw, "beta");
    for (auto& rw : nex_) tune(rw, "mu_nex");
    tune(tau_time_, "tau_time");
    tune(w_, "w");
  }

  void reset_totals() {
    auto reset = [](std::vector<RandomWalk>& v) {
      for (auto& rw : v) rw.total_accepted = rw.total_tried = 0;
    };
    reset(re_), reset(mu_), reset(tau_c_), reset(tau_nc_), reset(beta_), reset(nex_);
    tau_time_.total_accepted = tau_time_.total_tried = 0;
    w_.total_accepted = w_.total_tried = 0;
  }

  std::vector<std::pair<std::string, double>> acceptance() const {
    auto rate = [](const std::vector<RandomWalk>& v) {
      std::size_t a = 0, t = 0;
      for (const auto& rw : v) a += rw.total_accepted, t += rw.total_tried;
      return t ? static_cast<double>(a) / static_cast<double>(t) : std::numeric_limits<double>::quiet_NaN();
    };
    return {{"re", rate(re_)},         {"mu_ex", rate(mu_)},          {"tau_study", rate(tau_c_)},
            {"tau_study_scaled", rate(tau_nc_)}, {"tau_time", rate({tau_time_})}, {"w", rate({w_})},
            {"beta", rate(beta_)},     {"mu_nex", rate(nex_)}};
  }

  std::vector<double> scales() const {
    std::vector<double> out;
    for (const auto* v : {&re_, &mu_, &tau_c_, &tau_nc_, &beta_, &nex_})
      for (const auto& rw : *v) out.push_back(rw.log_scale);
    out.push_back(tau_time_.log_scale);
    out.push_back(w_.log_scale);
    return out;
  }

  void record(std::span<double> out) const {
    std::size_t i = 0;
    out[i++] = m_.log_joint(s_);
    out[i++] = s_.mu_mean_ex;
    for (double v : s_.mu_ex) out[i++] = v;
    for (double v : s_.rho) out[i++] = v;
    out[i++] = s_.w;
    out[i++] = s_.tau_time;
    for (double v : s_.tau_study) out[i++] = v;
    for (double v : s_.beta) out[i++] = v;
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t k = 0; k < K_; ++k) out[i++] = m_.theta(s_, j, k);
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t k = 0; k < K_; ++k) out[i++] = s_.z(j, k);
    if (cfg_.monitor_latent) {
      for (double v : s_.re.values()) out[i++] = v;
      for (double v : s_.mu_nex.values()) out[i++] = v;
    }
  }

 private:
  bool accept(RandomWalk& rw, double log_ratio) {
    ++rw.tried;
    ++rw.total_tried;
    if (log_ratio >= 0.0 || std::log(rng_.uniform()) < log_ratio) {
      ++rw.accepted;
      ++rw.total_accepted;
      return true;
    }
    return false;
  }

  double step(const RandomWalk& rw) { return std::exp(rw.log_scale) * rng_.normal(); }

  double ll(std::span<const std::size_t> rows) const { return m_.rows_log_likelihood(s_, rows); }

  void update_random_effects() {
    const bool active = m_.random_effects_active();
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t k = 0; k < K_; ++k) {
        double& e = s_.re(j, k);
        const double tau = s_.tau_study[k];
        if (!active || !s_.z(j, k)) {
          e = rng_.normal(0.0, tau);
          continue;
        }
        const auto& rows = m_.cell_rows(j, k);
        const double old = e;
        const double cur = dens::normal(old, 0.0, tau) + ll(rows);
        auto& rw = re_[j * K_ + k];
        e = old + step(rw);
        const double prop = dens::normal(e, 0.0, tau) + ll(rows);
        if (!accept(rw, prop - cur)) e = old;
      }
  }

  void update_mu() {
    for (std::size_t k = 0; k < K_; ++k) {
      const auto& rows = m_.interval_rows(k);
      const double old = s_.mu_ex[k];
      const double cur = m_.mu_log_prior_local(s_, k) + ll(rows);
      s_.mu_ex[k] = old + step(mu_[k]);
      const double prop = m_.mu_log_prior_local(s_, k) + ll(rows);
      if (!accept(mu_[k], prop - cur)) s_.mu_ex[k] = old;
    }
  }

  // Gaussian full conditional of mu_k given theta_ex,jk = mu_k + e_jk for all j.
  void update_mu_centered() {
    if (!m_.random_effects_active() || J_ == 0) return;
    const auto& p = m_.prior();
    for (std::size_t k = 0; k < K_; ++k) {
      const double t2 = s_.tau_study[k] * s_.tau_study[k];
      double prec = static_cast<double>(J_) / t2;
      double num = 0.0;
      for (std::size_t j = 0; j < J_; ++j) num += (s_.mu_ex[k] + s_.re(j, k)) / t2;
      if (p.mu_mode == MuMode::unrelated) {
        const double v = p.mu_unrelated[k].sd * p.mu_unrelated[k].sd;
        prec += 1.0 / v;
        num += p.mu_unrelated[k].mean / v;
      } else {
        const double v0 = s_.tau_time * s_.tau_time;
        const double v = v0 / s_.w;
        if (k == 0) {
          prec += 1.0 / v0;
          num += s_.mu_mean_ex / v0;
        } else {
          prec += 1.0 / v;
          num += (s_.mu_ex[k - 1] + s_.rho[k - 1]) / v;
        }
        if (k + 1 < K_) {
          prec += 1.0 / v;
          num += (s_.mu_ex[k + 1] - s_.rho[k]) / v;
        }
      }
      const double fresh = rng_.normal(num / prec, 1.0 / std::sqrt(prec));
      const double shift = fresh - s_.mu_ex[k];
      for (std::size_t j = 0; j < J_; ++j) s_.re(j, k) -= shift;
      s_.mu_ex[k] = fresh;
    }
  }

  void update_mu_mean_and_rho() {
    const auto& p = m_.prior();
    const double pm = 1.0 / (p.mu_mean.sd * p.mu_mean.sd);
    const double pr = 1.0 / (p.rho.sd * p.rho.sd);
    if (p.mu_mode == MuMode::unrelated) {
      s_.mu_mean_ex = rng_.normal(p.mu_mean.mean, p.mu_mean.sd);
      for (auto& r : s_.rho) r = rng_.normal(p.rho.mean, p.rho.sd);
      return;
    }
    const double v0 = s_.tau_time * s_.tau_time;
    {
      const double prec = pm + 1.0 / v0;
      const double num = p.mu_mean.mean * pm + s_.mu_ex[0] / v0;
      s_.mu_mean_ex = rng_.normal(num / prec, 1.0 / std::sqrt(prec));
    }
    const double v = v0 / s_.w;
    for (std::size_t k = 0; k + 1 < K_; ++k) {
      const double prec = pr + 1.0 / v;
      const double num = p.rho.mean * pr + (s_.mu_ex[k + 1] - s_.mu_ex[k]) / v;
      s_.rho[k] = rng_.normal(num / prec, 1.0 / std::sqrt(prec));
    }
  }

  void update_tau_time() {
    const auto& p = m_.prior();
    if (p.mu_mode == MuMode::unrelated) {
      s_.tau_time = std::exp(rng_.normal(p.tau_time.mean, p.tau_time.sd));
      return;
    }
    auto target = [&] {
      return dens::lognormal(s_.tau_time, p.tau_time.mean, p.tau_time.sd) + m_.ndlm_log_density(s_) +
             std::log(s_.tau_time);
    };
    const double old = s_.tau_time;
    const double cur = target();
    s_.tau_time = old * std::exp(step(tau_time_));
    if (!accept(tau_time_, target() - cur)) s_.tau_time = old;
  }

  void update_w() {
    const auto& p = m_.prior();
    const double lo = p.w_lower, hi = p.w_upper;
    if (p.mu_mode == MuMode::unrelated) {
      s_.w = rng_.uniform(lo, hi);
      return;
    }
    // w = lo + (hi - lo) * logistic(u)
    auto target = [&] { return m_.ndlm_log_density(s_) + std::log(s_.w - lo) + std::log(hi - s_.w); };
    const double old = s_.w;
    const double cur = target();
    const double u = std::log(old - lo) - std::log(hi - old) + step(w_);
    s_.w = lo + (hi - lo) / (1.0 + std::exp(-u));
    if (!(s_.w > lo && s_.w < hi) || !accept(w_, target() - cur)) s_.w = old;
  }

  void update_tau_study() {
    const auto& p = m_.prior();
    const bool active = m_.random_effects_active();
    for (std::size_t k = 0; k < K_; ++k) {
      double& tau = s_.tau_study[k];
      const double scale = p.tau_study_scale[k];
      {
        auto target = [&] {
          double lp = dens::half_normal(tau, scale) + std::log(tau);
          for (std::size_t j = 0; j < J_; ++j) lp += dens::normal(s_.re(j, k), 0.0, tau);
          return lp;
        };
        const double old = tau;
        const double cur = target();
        tau = old * std::exp(step(tau_c_[k]));
        if (!accept(tau_c_[k], target() - cur)) tau = old;
      }
      if (!active || J_ == 0) continue;
      // Rescale e_.k with tau_k: the N(0, tau^2) terms of e cancel against
      // the Jacobian of the joint rescaling.
      const auto& rows = m_.interval_rows(k);
      const double delta = step(tau_nc_[k]);
      const double factor = std::exp(delta);
      const double old = tau;
      const double cur = dens::half_normal(old, scale) + ll(rows);
      tau = old * factor;
      for (std::size_t j = 0; j < J_; ++j) s_.re(j, k) *= factor;
      const double prop = dens::half_normal(tau, scale) + ll(rows);
      if (!accept(tau_nc_[k], prop - cur + delta)) {
        tau = old;
        for (std::size_t j = 0; j < J_; ++j) s_.re(j, k) /= factor;
      }
    }
  }

  void update_beta() {
    const auto& p = m_.prior();
    for (std::size_t h = 0; h < H_; ++h) {
      const auto& rows = m_.covariate_rows(h);
      double& b = s_.beta[h];
      if (rows.empty()) {
        b = rng_.normal(p.beta[h].mean, p.beta[h].sd);
        continue;
      }
      const double old = b;
      const double cur = dens::normal(old, p.beta[h].mean, p.beta[h].sd) + ll(rows);
      b = old + step(beta_[h]);
      const double prop = dens::normal(b, p.beta[h].mean, p.beta[h].sd) + ll(rows);
      if (!accept(beta_[h], prop - cur)) b = old;
    }
  }

  void update_mu_nex() {
    const auto& p = m_.prior();
    for (std::size_t j = 0; j < J_; ++j)
      for (std::size_t k = 0; k < K_; ++k) {
        double& v = s_.mu_nex(j, k);
        const double mean = p.nex_mean(j, k), sd = p.nex_sd(j, k);
        if (s_.z(j, k)) {
          v = rng_.normal(mean, sd);
          continue;
        }
        const auto& rows = m_.cell_rows(j, k);
        auto& rw = nex_[j * K_ + k];
        const double old = v;
        const double cur = dens::normal(old, mean, sd) + ll(rows);
        v = old + step(rw);
        const double prop = dens::normal(v, mean, sd) + ll(rows);
        if (!accept(rw, prop - cur)) v = old;
      }
  }

  const MacModel& m_;
  const SamplerConfig& cfg_;
  Random rng_;
  std::size_t J_, K_, H_;
  ParameterState s_;
  std::vector<RandomWalk> re_, mu_, tau_c_, tau_nc_, beta_, nex_;
  RandomWalk tau_time_, w_;
};

inline void run_chain(const MacModel& model, const SamplerConfig& cfg, std::size_t chain, Table<double>& out,
                      std::vector<std::pair<std::string, double>>& acceptance) {
  ChainRunner runner(model, cfg, derive_seed(cfg.seed, chain));
  runner.initialize();
  std::size_t batch = 0;
  for (std::size_t it = 1; it <= cfg.n_burnin; ++it) {
    runner.sweep();
    if (it % cfg.adapt_window == 0) runner.adapt(++batch);
  }
  runner.reset_totals();
  std::size_t row = 0;
  for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
    runner.sweep();
    if (it % cfg.thin == 0 && row < out.rows()) {
      runner.record(std::span<double>(&out(row, 0), out.cols()));
      if (!std::isfinite(out(row, 0))) throw SamplerError("retained state with non-finite log density");
      ++row;
    }
  }
  acceptance = runner.acceptance();
}

}  // namespace detail

// Runs cfg.n_chains independent chains (in parallel, up to cfg.threads
// workers). Chain c uses the stream derive_seed(cfg.seed, c), so results do
// not depend on the number of workers.
inline PosteriorSample run(const MacModel& model_in, const SamplerConfig& cfg) {
  cfg.validate();
  const MacModel model = cfg.prior_only ? model_in.without_data() : model_in;
  PosteriorSample out;
  out.names = monitor_names(model, cfg.monitor_latent);
  out.chains.assign(cfg.n_chains, Table<double>(cfg.n_retained(), out.names.size()));
  out.acceptance.resize(cfg.n_chains);

  const std::size_t workers = std::clamp<std::size_t>(cfg.threads ? cfg.threads : cfg.n_chains, 1, cfg.n_chains);
  std::vector<std::exception_ptr> errors(cfg.n_chains);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next++; c < cfg.n_chains; c = next++) {
      try {
        detail::run_chain(model, cfg, c, out.chains[c], out.acceptance[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (cfg.n_chains >= 2 && cfg.n_retained() >= 100) {
    out.diagnostics.reserve(out.names.size());
    for (std::size_t q = 0; q < out.names.size(); ++q) out.diagnostics.push_back(diagnose(out.by_chain(q)));
  }
  return out;
}

}  // namespace histsurv
