// histsurv: command-line front end.
//
// Exit codes: 0 success, 2 input/usage error, 3 convergence warnings under
// --strict, 4 internal failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <histsurv.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace histsurv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitStrict = 3;
constexpr int kExitInternal = 4;

struct Globals {
  std::size_t threads = 0;
  bool strict = false;
  bool emit_schema = false;
  std::int64_t seed = -1;
  std::vector<std::string> sets;
  std::map<std::string, std::string> dotted;  // sampler.* flags
  std::string out_dir = ".";
};

json load_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
}

Dataset load_observations(const std::string& path, std::string& bytes) {
  bytes = read_file(path);
  std::istringstream in(bytes);
  return read_observations(in, path);
}

// --set prefix.path=value and --sampler.x=value, routed to the document
// named by the first path segment.
void apply_overrides(const Globals& g, const std::string& root, json& doc) {
  auto route = [&](const std::string& path, const std::string& value) {
    const auto dot = path.find('.');
    if (dot == std::string::npos) throw InputError("--set " + path + ": expected <document>.<field>=<value>");
    if (path.substr(0, dot) == root) apply_override(doc, path.substr(dot + 1), value);
  };
  for (const auto& [path, value] : g.dotted) route(path, value);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InputError("--set " + s + ": expected path=value");
    route(s.substr(0, eq), s.substr(eq + 1));
  }
}

void check_set_roots(const Globals& g, std::initializer_list<const char*> roots) {
  for (const auto& s : g.sets) {
    const auto root = s.substr(0, s.find('.'));
    if (std::none_of(roots.begin(), roots.end(), [&](const char* r) { return root == r; }))
      throw InputError("--set " + s + ": this command has no '" + root + "' configuration");
  }
}

SamplerConfig load_sampler(const Globals& g, const std::string& path, json& effective) {
  json doc = path.empty() ? json::object() : load_json(path);
  apply_overrides(g, "sampler", doc);
  if (g.seed >= 0) doc["seed"] = static_cast<std::uint64_t>(g.seed);
  SamplerConfig cfg = sampler_from_json(doc);
  if (g.threads > 0) cfg.threads = g.threads;
  effective = sampler_to_json(cfg);
  effective.erase("threads");  // does not affect results
  return cfg;
}

std::vector<double> parse_times(const std::string& text, const IntervalGrid& grid) {
  std::vector<double> out;
  if (text.empty()) {
    for (std::size_t k = 0; k < grid.size(); ++k) out.push_back(grid.upper(k));
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double t = std::stod(item, &used);
      if (used != item.size() || !(t >= 0.0)) throw std::invalid_argument(item);
      out.push_back(t);
    } catch (const std::exception&) {
      throw InputError("--times: '" + item + "' is not a nonnegative number");
    }
  }
  return out;
}

json stats_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"median", s.median}, {"lower", s.lower}, {"upper", s.upper}};
}

json table_json(const SummaryTable& t) {
  json rows = json::object();
  for (const auto& [name, s] : t.rows) rows[name] = stats_json(s);
  return rows;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string summary_csv(const std::vector<std::pair<std::string, const SummaryTable*>>& tables) {
  std::ostringstream out;
  out << "table,quantity,mean,sd,median,lower,upper\n";
  for (const auto& [label, t] : tables)
    for (const auto& [name, s] : t->rows)
      out << label << ',' << name << ',' << format_double(s.mean) << ',' << format_double(s.sd) << ','
          << format_double(s.median) << ',' << format_double(s.lower) << ',' << format_double(s.upper) << '\n';
  return out.str();
}

std::string plot_csv(const std::string& label, const Table<double>& theta, const IntervalGrid& grid) {
  std::vector<double> times;
  const std::size_t steps = 100;
  for (std::size_t i = 0; i <= steps; ++i)
    times.push_back(grid.horizon() * static_cast<double>(i) / static_cast<double>(steps));
  std::ostringstream out;
  out << "model,time,median,lower,upper\n";
  for (const auto& p : survival_band(theta, grid, times))
    out << label << ',' << format_double(p.time) << ',' << format_double(p.median) << ','
        << format_double(p.lower) << ',' << format_double(p.upper) << '\n';
  return out.str();
}

std::string draws_csv(const Table<double>& draws, const char* base) {
  std::ostringstream out;
  for (std::size_t k = 0; k < draws.cols(); ++k) out << (k ? "," : "") << vec_name(base, k);
  out << '\n';
  for (std::size_t i = 0; i < draws.rows(); ++i) {
    for (std::size_t k = 0; k < draws.cols(); ++k) out << (k ? "," : "") << format_double(draws(i, k));
    out << '\n';
  }
  return out.str();
}

json hyper_json(const PosteriorSample& post) {
  json out = json::object();
  for (std::size_t q = 0; q < post.names.size(); ++q) {
    const auto& n = post.names[q];
    if (n.rfind("re[", 0) == 0 || n.rfind("mu_nex[", 0) == 0 || n.rfind("theta[", 0) == 0 || n.rfind("z[", 0) == 0)
      continue;
    json row = stats_json(summarize(post.pooled(q)));
    if (!post.diagnostics.empty()) {
      const auto& d = post.diagnostics[q];
      row["rhat"] = std::isfinite(d.rhat) ? json(d.rhat) : json("inf");
      row["ess_bulk"] = d.ess_bulk;
      row["mcse"] = d.mcse;
    }
    out[n] = row;
  }
  return out;
}

int finish(const Globals& g, RunManifest& m, const Stopwatch& clock, const fs::path& dir) {
  m.duration_seconds = clock.seconds();
  write_json(dir / "manifest.json", m.to_json());
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
  return g.strict && !m.warnings.empty() ? kExitStrict : kExitOk;
}

fs::path prepare_dir(const Globals& g) {
  fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + g.out_dir + "'");
  return dir;
}

// ---------------------------------------------------------------- extract

int cmd_extract(const Globals& g, const std::string& counts_path, const std::string& grid_path,
                const std::string& out_path) {
  Stopwatch clock;
  check_set_roots(g, {});
  const std::string bytes = read_file(counts_path);
  std::istringstream in(bytes);
  const auto records = read_km_records(in, counts_path);
  const IntervalGrid grid = grid_from_json(load_json(grid_path));
  Dataset ds;
  ds.rows = aggregate_dataset(records, grid);
  std::ostringstream out;
  write_observations(out, ds);
  if (out_path.empty()) {
    std::cout << out.str();
    return kExitOk;
  }
  write_text(out_path, out.str());
  RunManifest m;
  m.command = "extract";
  m.config_hash = config_hash(grid_to_json(grid));
  m.dataset_hash = dataset_hash({bytes});
  const fs::path dir = fs::path(out_path).parent_path().empty() ? fs::path(".") : fs::path(out_path).parent_path();
  m.duration_seconds = clock.seconds();
  write_json(dir / (fs::path(out_path).stem().string() + ".manifest.json"), m.to_json());
  return kExitOk;
}

// -------------------------------------------------------------- map-prior

struct ModelInputs {
  std::string data, grid, prior, sampler, times;
};

int cmd_map_prior(const Globals& g, const ModelInputs& in) {
  Stopwatch clock;
  check_set_roots(g, {"prior", "sampler"});
  std::string bytes;
  const Dataset ds = load_observations(in.data, bytes);
  const IntervalGrid grid = grid_from_json(load_json(in.grid));
  json prior_doc = in.prior.empty() ? json::object() : load_json(in.prior);
  apply_overrides(g, "prior", prior_doc);
  const PriorConfig prior = prior_from_json(prior_doc, ds.n_studies, grid.size(), ds.n_covariates());
  json sampler_eff;
  const SamplerConfig cfg = load_sampler(g, in.sampler, sampler_eff);
  const auto times = parse_times(in.times, grid);

  const MacModel model(grid, ds.rows, ds.n_studies, prior);
  const auto post = run(model, cfg);
  const auto theta_star = map_prior_draws(post, grid.size(), cfg.seed);
  const auto surv = survival_summary(theta_star, grid, times);

  json theta_summary = json::object();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> col(theta_star.rows());
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = theta_star(i, k);
    theta_summary[vec_name("theta_star", k)] = stats_json(summarize(col));
  }
  const fs::path dir = prepare_dir(g);
  json out = {{"command", "map-prior"},
              {"time_unit", grid.time_unit()},
              {"n_studies", ds.n_studies},
              {"n_draws", theta_star.rows()},
              {"quantiles", {0.025, 0.975}},
              {"survival", table_json(surv)},
              {"theta_star", theta_summary},
              {"parameters", hyper_json(post)}};
  write_json(dir / "map_summary.json", out);
  write_text(dir / "map_summary.csv", summary_csv({{"map_prior", &surv}}));
  write_text(dir / "theta_star_draws.csv", draws_csv(theta_star, "theta_star"));
  write_text(dir / "plot_data.csv", plot_csv("MAP", theta_star, grid));

  RunManifest m;
  m.command = "map-prior";
  m.config_hash = config_hash({{"grid", grid_to_json(grid)}, {"prior", prior_to_json(prior)}, {"sampler", sampler_eff},
                               {"times", times}});
  m.dataset_hash = dataset_hash({bytes});
  m.seed = cfg.seed;
  m.warnings = post.convergence_warnings();
  return finish(g, m, clock, dir);
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const Globals& g, const ModelInputs& in, const std::string& variant, std::size_t new_study_label) {
  Stopwatch clock;
  check_set_roots(g, {"prior", "sampler"});
  if (variant != "EX" && variant != "EXNEX" && variant != "STRAT")
    throw CLI::ValidationError("--variant", "unknown variant '" + variant + "' (expected EX, EXNEX or STRAT)");
  std::string bytes;
  Dataset ds = load_observations(in.data, bytes);
  const IntervalGrid grid = grid_from_json(load_json(in.grid));
  const std::size_t label = new_study_label ? new_study_label : ds.n_studies;
  if (label < 1 || label > ds.n_studies) throw InputError("--new-study: no study " + std::to_string(label) + " in the data");
  const std::size_t target = label - 1;

  std::size_t J = ds.n_studies;
  std::vector<ObservationRow> rows = ds.rows;
  if (variant == "STRAT") {
    rows.clear();
    for (auto r : ds.rows)
      if (r.study == target) {
        r.study = 0;
        rows.push_back(std::move(r));
      }
    J = 1;
  }
  const std::size_t study_index = variant == "STRAT" ? 0 : target;

  json prior_doc = in.prior.empty() ? json::object() : load_json(in.prior);
  apply_overrides(g, "prior", prior_doc);
  PriorConfig prior = prior_from_json(prior_doc, J, grid.size(), ds.n_covariates());
  if (variant == "EX") prior.p_exch = Table<double>(J, grid.size(), 1.0);
  json sampler_eff;
  const SamplerConfig cfg = load_sampler(g, in.sampler, sampler_eff);
  const auto times = parse_times(in.times, grid);

  const MacModel model(grid, rows, J, prior);
  const auto post = run(model, cfg);
  const auto theta = theta_draws(post, study_index, grid.size());
  const auto per_draw = survival_summary(theta, grid, times);
  const auto composed = composed_survival_summary(theta, grid, times);

  json exch = json::array();
  if (post.find(cell_name("z", study_index, 0))) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto z = post.pooled(cell_name("z", study_index, k));
      exch.push_back(std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(z.size()));
    }
  }
  const fs::path dir = prepare_dir(g);
  json out = {{"command", "analyze"},
              {"variant", variant},
              {"new_study", label},
              {"time_unit", grid.time_unit()},
              {"n_draws", theta.rows()},
              {"quantiles", {0.025, 0.975}},
              {"per_draw", table_json(per_draw)},
              {"interval_composed", table_json(composed)},
              {"exchangeability_posterior", exch},
              {"parameters", hyper_json(post)}};
  write_json(dir / "summary.json", out);
  write_text(dir / "summary.csv", summary_csv({{"per_draw", &per_draw}, {"interval_composed", &composed}}));
  write_text(dir / "plot_data.csv", plot_csv(variant, theta, grid));
  write_text(dir / "theta_draws.csv", draws_csv(theta, "theta"));

  RunManifest m;
  m.command = "analyze --variant " + variant;
  m.config_hash = config_hash({{"grid", grid_to_json(grid)}, {"prior", prior_to_json(prior)}, {"sampler", sampler_eff},
                               {"times", times}, {"variant", variant}, {"new_study", label}});
  m.dataset_hash = dataset_hash({bytes});
  m.seed = cfg.seed;
  m.warnings = post.convergence_warnings();
  return finish(g, m, clock, dir);
}

// -------------------------------------------------------------------- ene

int cmd_ene(const Globals& g, const std::string& draws_path, std::uint64_t fit_seed) {
  Stopwatch clock;
  check_set_roots(g, {});
  const std::string bytes = read_file(draws_path);
  std::istringstream in(bytes);
  const auto draws = read_numeric_csv(in, draws_path);
  MixtureFitOptions opt;
  opt.seed = g.seed >= 0 ? static_cast<std::uint64_t>(g.seed) : fit_seed;

  json intervals = json::array();
  std::vector<NormalMixture> mixtures;
  for (std::size_t c = 0; c < draws.header.size(); ++c) {
    const auto fit = fit_mixture(draws.columns[c], opt);
    mixtures.push_back(fit.mixture);
    json comps = json::array();
    for (const auto& mc : fit.mixture.components())
      comps.push_back({{"weight", mc.weight}, {"mean", mc.mean}, {"sd", mc.sd}});
    intervals.push_back({{"quantity", draws.header[c]},
                         {"components", comps},
                         {"log_likelihood", fit.log_likelihood},
                         {"aic", fit.aic},
                         {"ess", ess_elir(fit.mixture)},
                         {"ess_monte_carlo", ess_elir_monte_carlo(fit.mixture, 200000, derive_seed(opt.seed, c))}});
  }
  const double total = total_ene(mixtures);
  const fs::path dir = prepare_dir(g);
  write_json(dir / "ene.json", {{"command", "ene"},
                                {"intervals", intervals},
                                {"total", total},
                                {"total_rounded", std::lround(total)},
                                {"aic_penalty", opt.aic_penalty}});
  RunManifest m;
  m.command = "ene";
  m.config_hash = config_hash({{"seed", opt.seed}, {"aic_penalty", opt.aic_penalty}, {"max_components", opt.max_components}});
  m.dataset_hash = dataset_hash({bytes});
  m.seed = opt.seed;
  return finish(g, m, clock, dir);
}

// --------------------------------------------------------------- simulate

int cmd_simulate(const Globals& g, const std::string& scenario_path, const std::string& history_path,
                 const std::string& grid_path) {
  Stopwatch clock;
  check_set_roots(g, {"scenarios"});
  json doc = load_json(scenario_path);
  apply_overrides(g, "scenarios", doc);
  for (const auto& [path, value] : g.dotted) apply_override(doc, path, value);  // sampler.* applies per sim
  if (g.seed >= 0) doc["seed"] = static_cast<std::uint64_t>(g.seed);
  const IntervalGrid grid = grid_from_json(load_json(grid_path));
  const SimulationPlan plan = plan_from_json(doc, grid);

  std::string hist_bytes;
  std::optional<HistoricalContext> hist;
  if (plan.needs_history) {
    if (history_path.empty()) throw InputError("--history is required for EX/EXNEX variants");
    const Dataset hd = load_observations(history_path, hist_bytes);
    SamplerConfig ms = plan.map_sampler;
    if (g.threads > 0) ms.threads = g.threads;
    hist = prepare_historical(hd.rows, hd.n_studies, grid, ms);
  }

  std::ostringstream csv;
  csv << "scenario,label,control_median,treatment_median,hazard_ratio,model,n_sims,success_rate,success_rate_se,"
         "bias,bias_se,rmse,rmse_se,mean_events\n";
  for (const auto& cell : plan.cells) {
    const auto& sc = cell.config;
    const auto r = operating_characteristics(sc, hist ? &*hist : nullptr, g.threads);
    csv << cell.scenario + 1 << ',' << oc_label(sc) << ',' << format_double(sc.control_median) << ','
        << format_double(sc.control_median / sc.hazard_ratio) << ',' << format_double(sc.hazard_ratio) << ','
        << variant_label(sc.variant, sc.exnex_weight) << ',' << r.n_sims << ',' << format_double(r.success_rate)
        << ',' << format_double(r.success_rate_se) << ',' << format_double(r.bias) << ','
        << format_double(r.bias_se) << ',' << format_double(r.rmse) << ',' << format_double(r.rmse_se) << ','
        << format_double(r.mean_events) << '\n';
  }
  const fs::path dir = prepare_dir(g);
  write_text(dir / "oc.csv", csv.str());
  if (hist) {
    json h = {{"log_overall_hazard", hist->log_overall_hazard}, {"map_mean", hist->map_mean}};
    write_json(dir / "history_summary.json", h);
  }
  RunManifest m;
  m.command = "simulate";
  m.config_hash = config_hash({{"grid", grid_to_json(grid)}, {"scenarios", doc}});
  m.dataset_hash = dataset_hash({hist_bytes});
  m.seed = doc.value("seed", std::uint64_t{2019});
  return finish(g, m, clock, dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Historical-control borrowing for piecewise-exponential survival data"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(0, 1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Cap on worker threads (0: automatic)");
  app.add_flag("--strict", g.strict, "Exit with code 3 when convergence warnings are raised");
  app.add_flag("--emit-schema", g.emit_schema, "Print the JSON schemas of all configuration files");
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_option("--set", g.sets, "Override a configuration field: <document>.<path>=<value>");
  app.add_option("--out-dir,-o", g.out_dir, "Output directory");
  for (const char* key : {"n_chains", "n_burnin", "n_iter", "thin", "adapt_window", "adapt_target"}) {
    const std::string name = std::string("sampler.") + key;
    app.add_option_function<std::string>(
        "--" + name, [&g, name](const std::string& v) { g.dotted[name] = v; }, "Override " + name);
  }

  std::string counts, grid_path, out_path;
  auto* extract = app.add_subcommand("extract", "Kaplan-Meier interval counts -> events/exposure rows");
  extract->add_option("--counts", counts, "KM counts CSV")->required();
  extract->add_option("--grid", grid_path, "Interval grid JSON")->required();
  extract->add_option("--out", out_path, "Output CSV (stdout when omitted)");

  ModelInputs mi;
  auto* map = app.add_subcommand("map-prior", "MAP prior for a new study from historical data");
  auto* analyze = app.add_subcommand("analyze", "MAC analysis of historical plus new-study data");
  for (auto* sub : {map, analyze}) {
    sub->add_option("--data", mi.data, "Observation CSV")->required();
    sub->add_option("--grid", mi.grid, "Interval grid JSON")->required();
    sub->add_option("--prior", mi.prior, "Prior JSON");
    sub->add_option("--sampler", mi.sampler, "Sampler JSON");
    sub->add_option("--times", mi.times, "Comma-separated survival times (default: grid boundaries)");
  }
  std::string variant = "EX";
  std::size_t new_study = 0;
  analyze->add_option("--variant", variant, "EX, EXNEX or STRAT");
  analyze->add_option("--new-study", new_study, "1-based label of the new study (default: highest)");

  std::string draws_path;
  std::uint64_t fit_seed = 20190801;
  auto* ene = app.add_subcommand("ene", "Prior effective number of events from a theta* draw dump");
  ene->add_option("--draws", draws_path, "theta_star_draws.csv from map-prior")->required();
  ene->add_option("--fit-seed", fit_seed, "Seed of the EM restarts");

  std::string scenarios, history;
  auto* sim = app.add_subcommand("simulate", "Operating characteristics over a scenario grid");
  sim->add_option("--scenarios", scenarios, "Scenario JSON")->required();
  sim->add_option("--history", history, "Historical observation CSV");
  sim->add_option("--grid", grid_path, "Interval grid JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (g.emit_schema) {
      std::cout << config_schemas().dump(2) << '\n';
      return kExitOk;
    }
    if (*extract) return cmd_extract(g, counts, grid_path, out_path);
    if (*map) return cmd_map_prior(g, mi);
    if (*analyze) return cmd_analyze(g, mi, variant, new_study);
    if (*ene) return cmd_ene(g, draws_path, fit_seed);
    if (*sim) return cmd_simulate(g, scenarios, history, grid_path);
    std::cerr << app.help();
    return kExitInput;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitInput;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
