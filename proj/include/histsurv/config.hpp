#pragma once

// JSON forms of the interval grid and of simulation plans, dotted-path
// overrides, and the published schemas.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "design_sim.hpp"
#include "sampler.hpp"
#include "survival.hpp"

namespace histsurv {

inline IntervalGrid grid_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("boundaries") || !j["boundaries"].is_array())
    throw InputError("grid.boundaries: expected an array of numbers");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "boundaries" && it.key() != "time_unit" && it.key() != "schema_version" && it.key() != "comment")
      throw InputError("grid." + it.key() + ": unknown field");
  std::vector<double> b;
  for (const auto& v : j["boundaries"]) {
    if (!v.is_number()) throw InputError("grid.boundaries: expected numbers");
    b.push_back(v.get<double>());
  }
  std::string unit;
  if (j.contains("time_unit")) {
    if (!j["time_unit"].is_string()) throw InputError("grid.time_unit: expected a string");
    unit = j["time_unit"].get<std::string>();
  }
  return IntervalGrid(std::move(b), std::move(unit));
}

inline nlohmann::json grid_to_json(const IntervalGrid& g) {
  return {{"time_unit", g.time_unit()},
          {"boundaries", std::vector<double>(g.boundaries().begin(), g.boundaries().end())}};
}

// Sets doc[a][b]... = value for the path "a.b...". The value text is read as
// JSON when it parses, as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& path, const std::string& text) {
  if (path.empty()) throw InputError("override: empty path");
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw InputError("override '" + path + "': empty path segment");
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) throw InputError("override '" + path + "': '" + key + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct SimulationCell {
  std::size_t scenario = 0;  // 0-based index in the plan
  ScenarioConfig config;
};

struct SimulationPlan {
  std::vector<SimulationCell> cells;  // scenario-major, then variant
  SamplerConfig map_sampler{3, 4000, 4000, 1, 77, 0.44, 50, 0, false, false, 100};
  bool needs_history = false;
};

// Every scenario is crossed with every variant. Scenario s uses the trial
// stream derive_seed(seed, s), shared by all variants.
inline SimulationPlan plan_from_json(const nlohmann::json& j, const IntervalGrid& grid) {
  auto fail = [](const std::string& f, const std::string& why) { throw InputError("scenarios." + f + ": " + why); };
  if (!j.is_object()) fail("<root>", "expected a JSON object");
  static const std::vector<std::string> known{"schema_version", "seed",    "n_sims",   "defaults", "sampler",
                                              "map_sampler",    "scenarios", "variants", "comment"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) fail(it.key(), "unknown field");
  if (j.contains("schema_version") && j["schema_version"] != 1) fail("schema_version", "unsupported version (expected 1)");
  if (!j.contains("scenarios") || !j["scenarios"].is_array() || j["scenarios"].empty())
    fail("scenarios", "expected a nonempty array");
  if (!j.contains("variants") || !j["variants"].is_array() || j["variants"].empty())
    fail("variants", "expected a nonempty array");

  ScenarioConfig base;
  base.grid = grid;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    base.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("n_sims")) {
    if (!j["n_sims"].is_number_unsigned()) fail("n_sims", "expected a positive integer");
    base.n_sims = j["n_sims"].get<std::size_t>();
  }
  if (j.contains("sampler")) base.sampler = sampler_from_json(j["sampler"]);
  SimulationPlan plan;
  if (j.contains("map_sampler")) plan.map_sampler = sampler_from_json(j["map_sampler"]);

  auto apply = [&](ScenarioConfig& sc, const nlohmann::json& o, const std::string& where) {
    if (!o.is_object()) fail(where, "expected an object");
    for (auto it = o.begin(); it != o.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      auto num = [&]() {
        if (!v.is_number()) fail(where + "." + k, "expected a number");
        return v.get<double>();
      };
      auto count = [&]() {
        if (!v.is_number_unsigned()) fail(where + "." + k, "expected a nonnegative integer");
        return v.get<std::size_t>();
      };
      if (k == "control_median") sc.control_median = num();
      else if (k == "hazard_ratio") sc.hazard_ratio = num();
      else if (k == "enrollment_rate") sc.enrollment_rate = num();
      else if (k == "n_patients") sc.n_patients = count();
      else if (k == "required_events") sc.required_events = count();
      else if (k == "success_threshold") sc.success_threshold = num();
      else if (k == "randomization") {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
          fail(where + ".randomization", "expected [treatment, control] slot counts");
        sc.ratio_treatment = v[0].get<unsigned>();
        sc.ratio_control = v[1].get<unsigned>();
      } else if (k != "comment") {
        fail(where + "." + k, "unknown field");
      }
    }
  };
  if (j.contains("defaults")) apply(base, j["defaults"], "defaults");

  for (std::size_t s = 0; s < j["scenarios"].size(); ++s) {
    ScenarioConfig sc = base;
    apply(sc, j["scenarios"][s], "scenarios[" + std::to_string(s) + "]");
    sc.seed = derive_seed(base.seed, s);
    for (std::size_t v = 0; v < j["variants"].size(); ++v) {
      const auto& vj = j["variants"][v];
      const std::string where = "variants[" + std::to_string(v) + "]";
      if (!vj.is_object() || !vj.contains("variant") || !vj["variant"].is_string())
        fail(where, "expected {\"variant\": \"EX\" | \"EXNEX\" | \"STRAT\", ...}");
      ScenarioConfig cell = sc;
      const auto name = vj["variant"].get<std::string>();
      if (name == "EX") cell.variant = Variant::ex;
      else if (name == "EXNEX") cell.variant = Variant::exnex;
      else if (name == "STRAT") cell.variant = Variant::strat;
      else fail(where + ".variant", "unknown variant '" + name + "'");
      for (auto it = vj.begin(); it != vj.end(); ++it) {
        if (it.key() == "variant") continue;
        if (it.key() == "weight" && it.value().is_number()) cell.exnex_weight = it.value().get<double>();
        else fail(where + "." + it.key(), "unknown field");
      }
      if (cell.variant != Variant::strat) plan.needs_history = true;
      cell.validate();
      plan.cells.push_back({s, std::move(cell)});
    }
  }
  return plan;
}

// JSON Schemas of the configuration files (draft 2020-12).
inline nlohmann::json config_schemas() {
  using nlohmann::json;
  const json normal = {{"type", "object"},
                       {"properties", {{"mean", {{"type", "number"}}}, {"sd", {{"type", "number"}, {"exclusiveMinimum", 0}}}}},
                       {"required", {"mean", "sd"}},
                       {"additionalProperties", false}};
  const json matrix = {{"description",
                        "number | K numbers | J arrays of K numbers | {\"default\": ..., \"studies\": {\"<1-based id>\": "
                        "number | K numbers}}"}};
  json prior = {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "prior"},
      {"type", "object"},
      {"additionalProperties", false},
      {"properties",
       {{"schema_version", {{"const", 1}}},
        {"comment", {{"type", "string"}}},
        {"mu_mode", {{"enum", {"ndlm", "unrelated"}}}},
        {"mu_mean", normal},
        {"rho", normal},
        {"w_bounds", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}, {"maxItems", 2}}},
        {"tau_time",
         {{"type", "object"},
          {"properties", {{"meanlog", {{"type", "number"}}}, {"sdlog", {{"type", "number"}, {"exclusiveMinimum", 0}}}}},
          {"additionalProperties", false}}},
        {"tau_study_scale", {{"description", "number or K positive numbers"}}},
        {"mu_unrelated", {{"description", "{mean, sd} or K of them"}}},
        {"nex_mean", matrix},
        {"nex_sd", matrix},
        {"p_exch", matrix},
        {"beta", {{"description", "{mean, sd} or H of them"}}},
        {"random_effects", {{"enum", {"auto", "on", "off"}}}}}}};
  json sampler = {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
                  {"title", "sampler"},
                  {"type", "object"},
                  {"additionalProperties", false},
                  {"properties",
                   {{"schema_version", {{"const", 1}}},
                    {"comment", {{"type", "string"}}},
                    {"n_chains", {{"type", "integer"}, {"minimum", 1}}},
                    {"n_burnin", {{"type", "integer"}, {"minimum", 0}}},
                    {"n_iter", {{"type", "integer"}, {"minimum", 1}}},
                    {"thin", {{"type", "integer"}, {"minimum", 1}}},
                    {"seed", {{"type", "integer"}, {"minimum", 0}}},
                    {"adapt_target", {{"type", "number"}, {"exclusiveMinimum", 0}, {"exclusiveMaximum", 1}}},
                    {"adapt_window", {{"type", "integer"}, {"minimum", 1}}},
                    {"threads", {{"type", "integer"}, {"minimum", 0}}},
                    {"prior_only", {{"type", "boolean"}}},
                    {"monitor_latent", {{"type", "boolean"}}},
                    {"max_init_attempts", {{"type", "integer"}, {"minimum", 1}}}}}};
  json grid = {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
               {"title", "grid"},
               {"type", "object"},
               {"additionalProperties", false},
               {"required", {"boundaries"}},
               {"properties",
                {{"schema_version", {{"const", 1}}},
                 {"comment", {{"type", "string"}}},
                 {"time_unit", {{"type", "string"}}},
                 {"boundaries", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}}}}}};
  const json scenario_fields = {{"control_median", {{"type", "number"}}},
                                {"hazard_ratio", {{"type", "number"}}},
                                {"enrollment_rate", {{"type", "number"}}},
                                {"n_patients", {{"type", "integer"}}},
                                {"required_events", {{"type", "integer"}}},
                                {"success_threshold", {{"type", "number"}}},
                                {"randomization", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
                                {"comment", {{"type", "string"}}}};
  json scenarios = {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "scenarios"},
      {"type", "object"},
      {"additionalProperties", false},
      {"required", {"scenarios", "variants"}},
      {"properties",
       {{"schema_version", {{"const", 1}}},
        {"comment", {{"type", "string"}}},
        {"seed", {{"type", "integer"}, {"minimum", 0}}},
        {"n_sims", {{"type", "integer"}, {"minimum", 1}}},
        {"defaults", {{"type", "object"}, {"properties", scenario_fields}, {"additionalProperties", false}}},
        {"sampler", {{"$ref", "#sampler"}}},
        {"map_sampler", {{"$ref", "#sampler"}}},
        {"scenarios",
         {{"type", "array"}, {"items", {{"type", "object"}, {"properties", scenario_fields}, {"additionalProperties", false}}}}},
        {"variants",
         {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"required", {"variant"}},
            {"properties", {{"variant", {{"enum", {"EX", "EXNEX", "STRAT"}}}}, {"weight", {{"type", "number"}}}}},
            {"additionalProperties", false}}}}}}}};
  return {{"prior", prior}, {"sampler", sampler}, {"grid", grid}, {"scenarios", scenarios}};
}

}  // namespace histsurv
