#include <gtest/gtest.h>

#include <histsurv/config.hpp>
#include <histsurv/manifest.hpp>

using namespace histsurv;
using nlohmann::json;

TEST(Manifest, Fnv1aReferenceVectors) {
  EXPECT_EQ(hex64(fnv1a("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(fnv1a("foobar")), "85944171f73967e8");
}

TEST(Manifest, HashesAreCanonical) {
  EXPECT_EQ(config_hash(json::parse(R"({"b": 1, "a": [1, 2]})")), config_hash(json::parse(R"({"a":[1,2],"b":1})")));
  EXPECT_NE(dataset_hash({"ab", "c"}), dataset_hash({"a", "bc"}));
  EXPECT_THROW(read_file("/nonexistent/file.csv"), InputError);
  RunManifest rm;
  rm.command = "analyze";
  rm.seed = 12;
  const auto m = rm.to_json();
  EXPECT_EQ(m["seed"], 12);
  EXPECT_TRUE(m.contains("version"));
}

TEST(Config, GridJson) {
  const auto g = grid_from_json(json::parse(R"({"time_unit": "days", "boundaries": [0, 30, 60]})"));
  EXPECT_EQ(g.size(), 2u);
  EXPECT_EQ(grid_from_json(grid_to_json(g)), g);
  EXPECT_THROW(grid_from_json(json::parse(R"({"boundaries": [0, 30], "units": "days"})")), InputError);
  EXPECT_THROW(grid_from_json(json::parse(R"({"boundaries": [1, 30]})")), InputError);
  EXPECT_THROW(grid_from_json(json::parse(R"({"boundaries": [0, "x"]})")), InputError);
}

TEST(Config, Overrides) {
  json doc = json::parse(R"({"sampler": {"n_iter": 10}})");
  apply_override(doc, "sampler.n_iter", "250");
  apply_override(doc, "prior.mu_mode", "unrelated");
  apply_override(doc, "prior.w_bounds", "[0.1, 0.5]");
  EXPECT_EQ(doc["sampler"]["n_iter"], 250);
  EXPECT_EQ(doc["prior"]["mu_mode"], "unrelated");
  EXPECT_EQ(doc["prior"]["w_bounds"][1], 0.5);
  EXPECT_THROW(apply_override(doc, "sampler..x", "1"), InputError);
  EXPECT_THROW(apply_override(doc, "sampler.n_iter.x", "1"), InputError);
}

TEST(Config, SimulationPlan) {
  const IntervalGrid g({0, 30, 60, 90});
  const auto plan = plan_from_json(json::parse(R"({
    "seed": 5, "n_sims": 10,
    "defaults": {"n_patients": 100, "required_events": 80},
    "scenarios": [{"control_median": 105}, {"control_median": 150, "hazard_ratio": 0.55}],
    "variants": [{"variant": "EX"}, {"variant": "EXNEX", "weight": 0.5}, {"variant": "STRAT"}]
  })"), g);
  ASSERT_EQ(plan.cells.size(), 6u);
  EXPECT_TRUE(plan.needs_history);
  EXPECT_EQ(plan.cells[0].config.seed, plan.cells[2].config.seed);
  EXPECT_NE(plan.cells[0].config.seed, plan.cells[3].config.seed);
  EXPECT_EQ(plan.cells[4].config.variant, Variant::exnex);
  EXPECT_EQ(plan.cells[4].config.hazard_ratio, 0.55);
  EXPECT_EQ(plan.cells[5].config.n_patients, 100u);
  EXPECT_EQ(plan.cells[5].config.n_sims, 10u);

  auto error = [&](const char* text) {
    try {
      plan_from_json(json::parse(text), g);
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(error(R"({"scenarios": [{}], "variants": [{"variant": "BOTH"}]})").find("variants[0].variant"),
            std::string::npos);
  EXPECT_NE(error(R"({"scenarios": [{"median": 3}], "variants": [{"variant": "EX"}]})").find("scenarios[0].median"),
            std::string::npos);
  EXPECT_NE(error(R"({"scenarios": [], "variants": [{"variant": "EX"}]})").find("scenarios"), std::string::npos);
  EXPECT_FALSE(plan_from_json(json::parse(R"({"scenarios": [{}], "variants": [{"variant": "STRAT"}]})"), g)
                   .needs_history);
}

TEST(Config, SchemasListEveryDocument) {
  const auto s = config_schemas();
  for (const char* k : {"prior", "sampler", "grid", "scenarios"}) EXPECT_TRUE(s.contains(k)) << k;
}
