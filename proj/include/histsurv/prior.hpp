#pragma once

// Prior configuration of the hierarchical piecewise-exponential model and
// its JSON form.
//
// Matrix-valued fields (nex_mean, nex_sd, p_exch) accept, in JSON:
//   a number                      -> every (study, interval) cell
//   an array of K numbers         -> per interval, same for every study
//   an array of J arrays of K     -> full study x interval matrix
//   {"default": <above>, "studies": {"<study id>": <number | K-array>}}
// Study ids are the 1-based labels used in the data files.

#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace histsurv {

using json = nlohmann::json;

enum class MuMode { ndlm, unrelated };
enum class RandomEffects { automatic, on, off };

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};

struct PriorConfig {
  MuMode mu_mode = MuMode::ndlm;
  NormalPrior mu_mean{-1.1711, 1.0};
  NormalPrior rho{0.0, 1.0};
  double w_lower = 0.0;
  double w_upper = 1.0;
  NormalPrior tau_time{-1.386294, 0.707293};  // meanlog, sdlog
  std::vector<double> tau_study_scale;        // K half-normal scales
  std::vector<NormalPrior> mu_unrelated;      // K, used when mu_mode == unrelated
  Table<double> nex_mean;                     // J x K
  Table<double> nex_sd;                       // J x K
  Table<double> p_exch;                       // J x K
  std::vector<NormalPrior> beta;              // H
  RandomEffects random_effects = RandomEffects::automatic;

  std::size_t n_studies() const { return p_exch.rows(); }
  std::size_t n_intervals() const { return tau_study_scale.size(); }
  std::size_t n_covariates() const { return beta.size(); }

  // Study random effects enter the EX log-hazard. "automatic" switches them
  // off for a single study.
  bool random_effects_active() const {
    switch (random_effects) {
      case RandomEffects::on: return true;
      case RandomEffects::off: return false;
      default: return n_studies() > 1;
    }
  }

  void validate() const {
    const std::size_t J = n_studies(), K = n_intervals();
    auto fail = [](const std::string& field, const std::string& why) {
      throw InputError("prior." + field + ": " + why);
    };
    if (K == 0) fail("tau_study_scale", "needs one entry per interval");
    if (!(mu_mean.sd > 0)) fail("mu_mean.sd", "must be > 0");
    if (!(rho.sd > 0)) fail("rho.sd", "must be > 0");
    if (!(tau_time.sd > 0)) fail("tau_time.sdlog", "must be > 0");
    if (!(w_lower >= 0.0 && w_lower < w_upper && w_upper <= 1.0))
      fail("w_bounds", "need 0 <= w1 < w2 <= 1");
    for (double s : tau_study_scale)
      if (!(s > 0)) fail("tau_study_scale", "must be > 0");
    if (mu_unrelated.size() != K) fail("mu_unrelated", "needs one entry per interval");
    for (const auto& p : mu_unrelated)
      if (!(p.sd > 0)) fail("mu_unrelated.sd", "must be > 0");
    for (const auto* t : {&nex_mean, &nex_sd, &p_exch})
      if (t->rows() != J || t->cols() != K) fail("p_exch", "matrix shape mismatch");
    for (double s : nex_sd.values())
      if (!(s > 0)) fail("nex_sd", "must be > 0");
    for (double p : p_exch.values())
      if (!(p >= 0.0 && p <= 1.0)) fail("p_exch", "entries must lie in [0, 1]");
    for (const auto& b : beta)
      if (!(b.sd > 0)) fail("beta.sd", "must be > 0");
  }
};

// Application defaults: EX borrowing with NDLM smoothing, half-normal(0.5)
// heterogeneity, unit-information NEX priors at 0, N(0, 10^2) for beta.
inline PriorConfig default_prior(std::size_t n_studies, std::size_t n_intervals, std::size_t n_covariates) {
  PriorConfig p;
  p.tau_study_scale.assign(n_intervals, 0.5);
  p.mu_unrelated.assign(n_intervals, NormalPrior{0.0, 10.0});
  p.nex_mean = Table<double>(n_studies, n_intervals, 0.0);
  p.nex_sd = Table<double>(n_studies, n_intervals, 1.0);
  p.p_exch = Table<double>(n_studies, n_intervals, 1.0);
  p.beta.assign(n_covariates, NormalPrior{0.0, 10.0});
  return p;
}

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw InputError("prior." + field + ": " + why);
}

inline double number(const json& j, const std::string& field) {
  require(j.is_number(), field, "expected a number");
  return j.get<double>();
}

inline NormalPrior normal_prior(const json& j, const std::string& field, const char* mean_key = "mean",
                                const char* sd_key = "sd") {
  require(j.is_object(), field, "expected an object with '" + std::string(mean_key) + "' and '" + sd_key + "'");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(it.key() == mean_key || it.key() == sd_key, field + "." + it.key(), "unknown field");
  require(j.contains(mean_key), field + "." + mean_key, "missing");
  require(j.contains(sd_key), field + "." + sd_key, "missing");
  NormalPrior p{number(j[mean_key], field + "." + mean_key), number(j[sd_key], field + "." + sd_key)};
  require(p.sd > 0, field + "." + sd_key, "must be > 0");
  return p;
}

// number -> all K; array -> must have K entries.
inline std::vector<double> per_interval(const json& j, std::size_t K, const std::string& field) {
  if (j.is_number()) return std::vector<double>(K, j.get<double>());
  require(j.is_array() && j.size() == K, field, "expected a number or an array of " + std::to_string(K));
  std::vector<double> v;
  for (std::size_t k = 0; k < K; ++k) v.push_back(number(j[k], field + "[" + std::to_string(k) + "]"));
  return v;
}

inline Table<double> study_interval(const json& j, std::size_t J, std::size_t K, const std::string& field) {
  Table<double> t(J, K);
  auto fill_row = [&](std::size_t r, const std::vector<double>& v) {
    for (std::size_t k = 0; k < K; ++k) t(r, k) = v[k];
  };
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      require(it.key() == "default" || it.key() == "studies", field + "." + it.key(), "unknown field");
    require(j.contains("default"), field + ".default", "missing");
    t = study_interval(j["default"], J, K, field + ".default");
    if (j.contains("studies")) {
      require(j["studies"].is_object(), field + ".studies", "expected an object keyed by study id");
      for (auto it = j["studies"].begin(); it != j["studies"].end(); ++it) {
        std::size_t id = 0;
        try {
          id = std::stoul(it.key());
        } catch (...) {
          require(false, field + ".studies." + it.key(), "study id must be a positive integer");
        }
        require(id >= 1 && id <= J, field + ".studies." + it.key(), "study id out of range 1.." + std::to_string(J));
        fill_row(id - 1, per_interval(it.value(), K, field + ".studies." + it.key()));
      }
    }
    return t;
  }
  if (j.is_array() && J > 0 && j.size() == J && !j.empty() && j[0].is_array()) {
    for (std::size_t r = 0; r < J; ++r) fill_row(r, per_interval(j[r], K, field + "[" + std::to_string(r) + "]"));
    return t;
  }
  const auto v = per_interval(j, K, field);
  for (std::size_t r = 0; r < J; ++r) fill_row(r, v);
  return t;
}

}  // namespace detail

inline PriorConfig prior_from_json(const json& j, std::size_t n_studies, std::size_t n_intervals,
                                   std::size_t n_covariates) {
  using detail::require;
  require(j.is_object(), "<root>", "expected a JSON object");
  static const std::set<std::string> known{
      "schema_version", "mu_mode", "mu_mean",  "rho",     "w_bounds", "tau_time",      "tau_study_scale",
      "mu_unrelated",   "nex_mean", "nex_sd",  "p_exch",  "beta",     "random_effects", "comment"};
  for (auto it = j.begin(); it != j.end(); ++it) require(known.count(it.key()) > 0, it.key(), "unknown field");
  if (j.contains("schema_version"))
    require(j["schema_version"] == 1, "schema_version", "unsupported version (expected 1)");

  const std::size_t J = n_studies, K = n_intervals;
  PriorConfig p = default_prior(J, K, n_covariates);
  if (j.contains("mu_mode")) {
    const auto& m = j["mu_mode"];
    require(m.is_string() && (m == "ndlm" || m == "unrelated"), "mu_mode", "expected \"ndlm\" or \"unrelated\"");
    p.mu_mode = m == "ndlm" ? MuMode::ndlm : MuMode::unrelated;
  }
  if (j.contains("mu_mean")) p.mu_mean = detail::normal_prior(j["mu_mean"], "mu_mean");
  if (j.contains("rho")) p.rho = detail::normal_prior(j["rho"], "rho");
  if (j.contains("w_bounds")) {
    const auto& w = j["w_bounds"];
    require(w.is_array() && w.size() == 2, "w_bounds", "expected [w1, w2]");
    p.w_lower = detail::number(w[0], "w_bounds[0]");
    p.w_upper = detail::number(w[1], "w_bounds[1]");
    require(p.w_lower >= 0.0 && p.w_lower < p.w_upper && p.w_upper <= 1.0, "w_bounds", "need 0 <= w1 < w2 <= 1");
  }
  if (j.contains("tau_time")) p.tau_time = detail::normal_prior(j["tau_time"], "tau_time", "meanlog", "sdlog");
  if (j.contains("tau_study_scale")) {
    p.tau_study_scale = detail::per_interval(j["tau_study_scale"], K, "tau_study_scale");
    for (double s : p.tau_study_scale) require(s > 0, "tau_study_scale", "must be > 0");
  }
  if (j.contains("mu_unrelated")) {
    const auto& m = j["mu_unrelated"];
    if (m.is_object()) {
      p.mu_unrelated.assign(K, detail::normal_prior(m, "mu_unrelated"));
    } else {
      require(m.is_array() && m.size() == K, "mu_unrelated", "expected an object or an array of " + std::to_string(K));
      for (std::size_t k = 0; k < K; ++k)
        p.mu_unrelated[k] = detail::normal_prior(m[k], "mu_unrelated[" + std::to_string(k) + "]");
    }
  }
  if (j.contains("nex_mean")) p.nex_mean = detail::study_interval(j["nex_mean"], J, K, "nex_mean");
  if (j.contains("nex_sd")) p.nex_sd = detail::study_interval(j["nex_sd"], J, K, "nex_sd");
  if (j.contains("p_exch")) p.p_exch = detail::study_interval(j["p_exch"], J, K, "p_exch");
  if (j.contains("beta")) {
    const auto& b = j["beta"];
    if (b.is_object()) {
      p.beta.assign(n_covariates, detail::normal_prior(b, "beta"));
    } else {
      require(b.is_array() && b.size() == n_covariates, "beta",
              "expected an object or an array of " + std::to_string(n_covariates));
      for (std::size_t h = 0; h < n_covariates; ++h)
        p.beta[h] = detail::normal_prior(b[h], "beta[" + std::to_string(h) + "]");
    }
  }
  if (j.contains("random_effects")) {
    const auto& r = j["random_effects"];
    require(r.is_string() && (r == "auto" || r == "on" || r == "off"), "random_effects",
            "expected \"auto\", \"on\" or \"off\"");
    p.random_effects = r == "auto" ? RandomEffects::automatic : r == "on" ? RandomEffects::on : RandomEffects::off;
  }
  p.validate();
  return p;
}

inline json prior_to_json(const PriorConfig& p) {
  auto normal = [](const NormalPrior& n) { return json{{"mean", n.mean}, {"sd", n.sd}}; };
  auto matrix = [](const Table<double>& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  json mu_unrel = json::array();
  for (const auto& m : p.mu_unrelated) mu_unrel.push_back(normal(m));
  json beta = json::array();
  for (const auto& b : p.beta) beta.push_back(normal(b));
  return json{{"schema_version", 1},
              {"mu_mode", p.mu_mode == MuMode::ndlm ? "ndlm" : "unrelated"},
              {"mu_mean", normal(p.mu_mean)},
              {"rho", normal(p.rho)},
              {"w_bounds", {p.w_lower, p.w_upper}},
              {"tau_time", {{"meanlog", p.tau_time.mean}, {"sdlog", p.tau_time.sd}}},
              {"tau_study_scale", p.tau_study_scale},
              {"mu_unrelated", mu_unrel},
              {"nex_mean", matrix(p.nex_mean)},
              {"nex_sd", matrix(p.nex_sd)},
              {"p_exch", matrix(p.p_exch)},
              {"beta", beta},
              {"random_effects", p.random_effects == RandomEffects::automatic ? "auto"
                                 : p.random_effects == RandomEffects::on      ? "on"
                                                                              : "off"}};
}

}  // namespace histsurv
