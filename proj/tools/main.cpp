// bayesrank: sample abilities, compute ordering statements, optimise them,
// run the simulation study and export plot-ready files.

#include <bayesrank/io.hpp>
#include <bayesrank/model.hpp>
#include <bayesrank/rankings.hpp>
#include <bayesrank/reward.hpp>
#include <bayesrank/simlab.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bayesrank;

namespace {

/// Bad flag combinations or configuration; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::string subcommand;
  std::vector<std::string> arguments;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path manifest_path;

  void write() const {
    json j;
    j["subcommand"] = subcommand;
    j["version"] = BAYESRANK_VERSION;
    j["arguments"] = arguments;
    j["inputs"] = json::array();
    for (const auto& p : inputs) j["inputs"].push_back(fs::absolute(p).string());
    j["outputs"] = json::array();
    for (const auto& p : outputs) j["outputs"].push_back(fs::absolute(p).string());
    j["output_dir"] = fs::absolute(manifest_path).parent_path().string();
    j["config"] = config ? json(fs::absolute(*config).string()) : json(nullptr);
    j["seed"] = seed ? json(*seed) : json(nullptr);
    std::ofstream out(manifest_path);
    if (!out) throw InvalidInput("cannot write manifest '" + manifest_path.string() + "'");
    out << j.dump(2) << '\n';
  }
};

/// Outputs may not coincide with inputs or with each other.
void guard_outputs(const Manifest& m) {
  std::set<fs::path> seen;
  auto canonical = [](const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)); };
  std::set<fs::path> inputs;
  for (const auto& p : m.inputs) inputs.insert(canonical(p));
  if (m.config) inputs.insert(canonical(*m.config));
  std::vector<fs::path> all = m.outputs;
  all.push_back(m.manifest_path);
  for (const auto& p : all) {
    const auto c = canonical(p);
    if (inputs.count(c)) throw UsageError("refusing to overwrite input file '" + p.string() + "'");
    if (!seen.insert(c).second) throw UsageError("output '" + p.string() + "' is written twice");
  }
}

fs::path manifest_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) { open_output(path) << text; }

// ---------------------------------------------------------------------------
// Entity filters shared by the draw-consuming subcommands.

struct EntityFilter {
  std::vector<std::string> entities;
  std::string entities_file;
  std::vector<std::string> teams;

  void add_to(CLI::App* app) {
    app->add_option("--entities", entities, "Keep only these entity ids (comma separated)")->delimiter(',');
    app->add_option("--entities-file", entities_file, "Keep only the ids listed one per line in this file")
        ->check(CLI::ExistingFile);
    app->add_option("--teams", teams, "Keep only entities whose players all belong to these teams")->delimiter(',');
  }

  bool active() const { return !entities.empty() || !entities_file.empty() || !teams.empty(); }

  void collect_inputs(Manifest& m) const {
    if (!entities_file.empty()) m.inputs.emplace_back(entities_file);
  }

  DrawsXd apply(const DrawsXd& draws) const {
    const int used = !entities.empty() + !entities_file.empty() + !teams.empty();
    if (used == 0) return draws;
    if (used > 1) throw UsageError("use only one of --entities, --entities-file and --teams");
    std::vector<std::string> ids = entities;
    if (!entities_file.empty()) {
      std::ifstream in(entities_file);
      for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
      }
    }
    if (!teams.empty()) {
      const std::set<std::string> wanted(teams.begin(), teams.end());
      for (const auto& id : draws.ids()) {
        bool keep = true;
        std::stringstream parts(id);
        for (std::string part; std::getline(parts, part, '|');) {
          const auto cut = part.find('_');
          keep = keep && cut != std::string::npos && wanted.count(part.substr(0, cut));
        }
        if (keep) ids.push_back(id);
      }
      if (ids.empty()) throw InvalidInput("no entity belongs to the selected teams");
    }
    return project_draws(draws, ids);
  }
};

// ---------------------------------------------------------------------------
// Reward configuration: JSON file plus flag overrides.

RewardConfig reward_from_json(const json& j) {
  static const std::set<std::string> known{"h", "epsilon", "box", "alpha_grid", "alpha_grid_points",
                                           "starts", "delta0", "delta_min"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw UsageError("unknown configuration key '" + key + "'");
  RewardConfig c = RewardConfig::defaults();
  try {
    if (j.contains("h")) {
      const auto h = j.at("h").get<std::string>();
      if (h == "identity") c.h = SizeTransform::identity;
      else if (h == "log1p") c.h = SizeTransform::log1p;
      else throw UsageError("h must be 'identity' or 'log1p'");
    }
    if (j.contains("epsilon")) {
      if (j.at("epsilon").is_null()) c.epsilon.reset();
      else c.epsilon = j.at("epsilon").get<double>();
    }
    if (j.contains("box")) {
      static const char* names[] = {"alpha", "t", "gamma", "q"};
      for (std::size_t k = 0; k < 4; ++k)
        if (j.at("box").contains(names[k])) {
          const auto v = j.at("box").at(names[k]).get<std::vector<double>>();
          if (v.size() != 2) throw UsageError(std::string("box.") + names[k] + " must be [lo, hi]");
          c.box[k] = {v[0], v[1]};
        }
    }
    if (j.contains("alpha_grid") && j.contains("alpha_grid_points"))
      throw UsageError("give alpha_grid or alpha_grid_points, not both");
    if (j.contains("alpha_grid")) c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    else c.alpha_grid = uniform_grid(c.box[0].lo, c.box[0].hi, j.value("alpha_grid_points", 21));
    if (j.contains("starts"))
      for (const auto& s : j.at("starts")) {
        const auto v = s.get<std::vector<double>>();
        if (v.size() != 4) throw UsageError("each start must be [alpha, t, gamma, q]");
        c.starts.push_back({v[0], v[1], v[2], v[3]});
      }
    c.delta0 = j.value("delta0", c.delta0);
    c.delta_min = j.value("delta_min", c.delta_min);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

SizeTransform parse_h(const std::string& h) {
  if (h == "identity") return SizeTransform::identity;
  if (h == "log1p") return SizeTransform::log1p;
  throw UsageError("--size-transform must be 'identity' or 'log1p'");
}

void validate_config(const RewardConfig& c) {
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

json search_block(const SearchResult& r, const StatementEvaluator& ev, double seconds) {
  return {{"iterations", r.iterations}, {"evaluations", ev.evaluations()},
          {"starts", ev.config().starts.empty() ? default_starts(ev.config()).size() : ev.config().starts.size()},
          {"seconds", seconds}};
}

std::string with_extra(const std::string& report, const std::string& key, const json& value) {
  json j = json::parse(report);
  j[key] = value;
  return j.dump(2) + "\n";
}

void write_graph_if_possible(const GlobalStatement& st, const std::vector<std::string>& ids, const fs::path& path) {
  const RankingGraph graph = derive_rankings(st);
  write_text(path, export_graph(graph, ids));
  if (graph.chains_truncated) std::cerr << "note: more maximal chains than listed\n";
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string encounters;
  int prior = 3;
  SamplerConfig sampler;
  std::string out_dir;
  bool lineups = false;
};

int run_sample(const SampleArgs& a, Manifest m) {
  const fs::path dir(a.out_dir);
  m.inputs = {a.encounters};
  m.seed = a.sampler.seed;
  m.outputs = {dir / "players.csv", dir / "params.csv", dir / "diagnostics.json"};
  if (a.lineups) m.outputs.push_back(dir / "lineups.csv");
  m.manifest_path = dir / "manifest.json";
  guard_outputs(m);
  try {
    a.sampler.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }

  const auto table = read_encounters(a.encounters);
  if (table.size() == 0) std::cerr << "warning: no encounters; draws follow the prior\n";
  const auto start = std::chrono::steady_clock::now();
  const auto out = run_chains(a.sampler, table.encounters, table.registry.players(), PriorSpec::numbered(a.prior),
                              table.registry.player_ids());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (out.rank_deficient)
    std::cerr << "warning: the design does not identify every ability; the posterior leans on the prior\n";

  fs::create_directories(dir);
  write_draws(dir / "players.csv", out.players);
  {
    auto f = open_output(dir / "params.csv");
    write_columns(f, {"mu", "sigma2", "lambda"}, {&out.mu, &out.sigma2, &out.lambda});
  }
  json rhat = json::object();
  double max_rhat = 0.0;
  for (std::size_t p = 0; p < out.rhat.size(); ++p) {
    const double r = out.rhat[p];
    rhat[out.players.ids()[p]] = std::isfinite(r) ? json(r) : json(nullptr);
    if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);
  }
  json diag = {{"prior", a.prior},
               {"encounters", table.size()},
               {"players", table.registry.players()},
               {"lineups", table.registry.lineups()},
               {"reference", out.players.id(out.reference)},
               {"rank_deficient", out.rank_deficient},
               {"draws", out.players.draws()},
               {"chains", a.sampler.chains},
               {"burn_in", a.sampler.burn_in},
               {"thin", a.sampler.thin},
               {"iterations", out.diagnostics.iterations},
               {"variance_retries", out.diagnostics.variance_retries},
               {"scale_retries", out.diagnostics.scale_retries},
               {"slice_expansions", out.diagnostics.slice_expansions},
               {"slice_shrinks", out.diagnostics.slice_shrinks},
               {"max_rhat", max_rhat},
               {"rhat", rhat},
               {"seconds", seconds}};
  write_text(dir / "diagnostics.json", diag.dump(2) + "\n");
  if (a.lineups)
    write_draws(dir / "lineups.csv",
                lineup_draws(out.players, table.registry.lineup_list(), table.registry.lineup_ids()));
  m.write();
  std::cerr << "sampled " << out.players.draws() << " draws for " << out.players.entities() << " players in "
            << seconds << " s (max split R-hat " << max_rhat << ")\n";
  return 0;
}

struct StatementArgs {
  std::string draws;
  Action action;
  std::string h = "identity";
  std::optional<double> epsilon;
  std::string out;
  std::string graph;
  EntityFilter filter;
  unsigned workers = 0;
};

int run_statements(const StatementArgs& a, Manifest m) {
  if (!a.graph.empty() && !(a.action.t == 0.0 && a.action.q == 0.0))
    throw UsageError("--graph needs --t 0 and --q 0");
  m.inputs = {a.draws};
  a.filter.collect_inputs(m);
  m.outputs = {a.out};
  if (!a.graph.empty()) m.outputs.emplace_back(a.graph);
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);

  const DrawsXd draws = a.filter.apply(read_draws(a.draws));
  RewardConfig config = RewardConfig::defaults();
  config.h = parse_h(a.h);
  config.epsilon = a.epsilon;
  const auto counts = count_pairwise(draws, a.workers);
  GlobalStatement st = build_statement(draws, counts, a.action, a.workers);
  score(st, config);
  write_text(a.out, statement_report(st, draws.ids(), &counts));
  if (!a.graph.empty()) write_graph_if_possible(st, draws.ids(), a.graph);
  m.write();
  std::cerr << "statement: " << st.members.size() << " members, prob " << st.prob() << "\n";
  return 0;
}

struct OptimizeArgs {
  std::string draws;
  std::string config;
  std::optional<double> epsilon;
  std::string h;
  std::optional<int> alpha_grid_points;
  std::optional<double> delta0;
  std::optional<double> delta_min;
  std::vector<double> box_alpha, box_t, box_gamma, box_q;
  std::string out;
  std::string graph;
  EntityFilter filter;
  unsigned workers = 0;
};

int run_optimize(const OptimizeArgs& a, Manifest m) {
  m.inputs = {a.draws};
  a.filter.collect_inputs(m);
  if (!a.config.empty()) m.config = a.config;
  m.outputs = {a.out};
  if (!a.graph.empty()) m.outputs.emplace_back(a.graph);
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);

  json j = json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError(std::string("cannot parse configuration: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  }
  auto set_box = [&](const char* name, const std::vector<double>& v) {
    if (v.empty()) return;
    if (v.size() != 2) throw UsageError(std::string("--box-") + name + " takes lo,hi");
    j["box"][name] = v;
  };
  set_box("alpha", a.box_alpha);
  set_box("t", a.box_t);
  set_box("gamma", a.box_gamma);
  set_box("q", a.box_q);
  if (a.epsilon) j["epsilon"] = *a.epsilon;
  if (!a.h.empty()) j["h"] = a.h;
  if (a.alpha_grid_points) {
    j.erase("alpha_grid");
    j["alpha_grid_points"] = *a.alpha_grid_points;
  }
  if (a.delta0) j["delta0"] = *a.delta0;
  if (a.delta_min) j["delta_min"] = *a.delta_min;
  const RewardConfig config = reward_from_json(j);
  validate_config(config);

  const DrawsXd draws = a.filter.apply(read_draws(a.draws));
  const auto start = std::chrono::steady_clock::now();
  const auto counts = count_pairwise(draws, a.workers);
  StatementEvaluator evaluator(draws, counts, config, a.workers);
  const SearchResult best = optimize(evaluator);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_text(a.out, with_extra(statement_report(best.statement, draws.ids(), &counts), "search",
                               search_block(best, evaluator, seconds)));
  if (!a.graph.empty()) {
    if (best.action.t == 0.0 && best.action.q == 0.0) {
      write_graph_if_possible(best.statement, draws.ids(), a.graph);
    } else {
      std::cerr << "warning: optimal action has nonzero errors; no graph written\n";
      m.outputs.pop_back();
    }
  }
  m.write();
  std::cerr << "optimal action (" << best.action.alpha << ", " << best.action.t << ", " << best.action.gamma << ", "
            << best.action.q << "), prob " << best.statement.prob() << ", reward " << best.reward << ", "
            << seconds << " s\n";
  return 0;
}

struct SimulateArgs {
  StudyConfig study = StudyConfig::desk();
  bool full_scale = false;
  std::string base;
  std::optional<int> chains, burn_in, thin, draws;
  std::string out;
};

int run_simulate(SimulateArgs a, Manifest m) {
  if (!a.base.empty()) m.inputs = {a.base};
  m.outputs = {a.out};
  m.seed = a.study.seed;
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);

  StudyConfig study = a.study;
  if (a.full_scale) {
    const StudyConfig full = StudyConfig::full();
    study.replicates = full.replicates;
    study.cell = full.cell;
    study.truth_sampler = full.truth_sampler;
  }
  if (a.chains) study.cell.sampler.chains = *a.chains;
  if (a.burn_in) study.cell.sampler.burn_in = *a.burn_in;
  if (a.thin) study.cell.sampler.thin = *a.thin;
  if (a.draws) study.cell.sampler.target_draws = *a.draws;
  try {
    study.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto start = std::chrono::steady_clock::now();
  const auto rows = a.base.empty() ? run_study(study) : run_study(study, read_encounters(a.base));
  auto f = open_output(a.out);
  write_metrics(f, rows);
  f.close();
  m.write();
  std::cerr << rows.size() << " cells in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  return 0;
}

struct ExportArgs {
  std::string draws;
  std::string out;
  double alpha = 0.0;
  double gamma = 0.0;
  EntityFilter filter;
  unsigned workers = 0;
};

int run_caterpillar(const ExportArgs& a, Manifest m) {
  m.inputs = {a.draws};
  a.filter.collect_inputs(m);
  m.outputs = {a.out};
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);
  const DrawsXd draws = a.filter.apply(read_draws(a.draws));
  auto f = open_output(a.out);
  write_caterpillar(f, caterpillar(draws));
  f.close();
  m.write();
  return 0;
}

int run_graph(const ExportArgs& a, Manifest m) {
  m.inputs = {a.draws};
  a.filter.collect_inputs(m);
  m.outputs = {a.out};
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);
  const DrawsXd draws = a.filter.apply(read_draws(a.draws));
  const auto counts = count_pairwise(draws, a.workers);
  const auto st = build_statement(draws, counts, {a.alpha, 0.0, a.gamma, 0.0}, a.workers);
  write_graph_if_possible(st, draws.ids(), a.out);
  m.write();
  std::cerr << "graph statement probability " << st.prob() << "\n";
  return 0;
}

struct SubsetArgs {
  std::string encounters;
  std::string draws;
  EntityFilter filter;
  std::string out;
};

int run_subset(const SubsetArgs& a, Manifest m) {
  if (a.encounters.empty() == a.draws.empty()) throw UsageError("give exactly one of --encounters and --draws");
  m.inputs = {a.encounters.empty() ? a.draws : a.encounters};
  a.filter.collect_inputs(m);
  m.outputs = {a.out};
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);
  if (!a.filter.active()) throw UsageError("no filter given");
  if (!a.encounters.empty()) {
    if (a.filter.teams.empty()) throw UsageError("encounter files are subset by --teams");
    const auto table = subset_teams(read_encounters(a.encounters), a.filter.teams);
    if (table.size() == 0) std::cerr << "warning: no encounters between the selected teams\n";
    write_encounters(fs::path(a.out), table.records);
    std::cerr << table.size() << " encounters, " << table.registry.players() << " players\n";
  } else {
    write_draws(fs::path(a.out), a.filter.apply(read_draws(a.draws)));
  }
  m.write();
  return 0;
}

struct GenerateArgs {
  LeagueConfig league;
  std::string out;
};

int run_generate(const GenerateArgs& a, Manifest m) {
  m.outputs = {a.out};
  m.seed = a.league.seed;
  m.manifest_path = manifest_for(a.out);
  guard_outputs(m);
  try {
    a.league.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  write_encounters(fs::path(a.out), generate_league(a.league));
  m.write();
  return 0;
}

void add_workers(CLI::App* app, unsigned& workers) {
  app->add_option("--workers", workers, "Worker threads (0: $BAYESRANK_WORKERS or all cores)");
}

void add_action(CLI::App* app, Action& a, bool errors) {
  app->add_option("--alpha", a.alpha, "Pairwise credibility level alpha")->check(CLI::Range(0.0, 1.0));
  if (errors) {
    app->add_option("--t", a.t, "Local error t")->check(CLI::Range(0.0, 1.0));
    app->add_option("--q", a.q, "Global error q")->check(CLI::Range(0.0, 1.0));
  }
  app->add_option("--gamma", a.gamma, "Local probability slack gamma")->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior ordering statements for player and lineup abilities"};
  app.set_version_flag("--version", std::string(BAYESRANK_VERSION));
  app.require_subcommand(1);

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.arguments.emplace_back(argv[i]);

  SampleArgs sample;
  auto* cmd_sample = app.add_subcommand("sample", "Fit the lineup point-difference model and write posterior draws");
  cmd_sample->add_option("--encounters", sample.encounters, "Encounter CSV")->required()->check(CLI::ExistingFile);
  cmd_sample->add_option("--prior", sample.prior, "Ability prior: 1, 2 or 3")->check(CLI::IsMember({1, 2, 3}));
  cmd_sample->add_option("--chains", sample.sampler.chains, "Independent chains")->capture_default_str();
  cmd_sample->add_option("--burn-in", sample.sampler.burn_in, "Discarded iterations per chain")->capture_default_str();
  cmd_sample->add_option("--thin", sample.sampler.thin, "Keep every k-th iteration")->capture_default_str();
  cmd_sample->add_option("--draws", sample.sampler.target_draws, "Kept draws over all chains")->capture_default_str();
  cmd_sample->add_option("--seed", sample.sampler.seed, "Random seed")->capture_default_str();
  cmd_sample->add_option("--max-iterations", sample.sampler.max_iterations, "Per-chain iteration cap (0: none)");
  cmd_sample->add_flag("--lineups", sample.lineups, "Also write draws of every observed lineup");
  cmd_sample->add_option("--out-dir", sample.out_dir, "Output directory")->required();
  add_workers(cmd_sample, sample.sampler.workers);

  StatementArgs statements;
  auto* cmd_statements = app.add_subcommand("statements", "Global statement at a fixed action");
  cmd_statements->add_option("--draws", statements.draws, "Draws CSV")->required()->check(CLI::ExistingFile);
  add_action(cmd_statements, statements.action, true);
  cmd_statements->add_option("--size-transform", statements.h, "Size transform in the cost: identity or log1p");
  cmd_statements->add_option("--epsilon", statements.epsilon, "Zero the reward below probability 1 - epsilon")
      ->check(CLI::Range(0.0, 1.0));
  cmd_statements->add_option("--graph", statements.graph, "Also write the ranking graph (DOT); needs t = q = 0");
  cmd_statements->add_option("-o,--out", statements.out, "Report JSON")->required();
  statements.filter.add_to(cmd_statements);
  add_workers(cmd_statements, statements.workers);

  OptimizeArgs opt;
  auto* cmd_optimize = app.add_subcommand("optimize", "Search the action that maximises the reward");
  cmd_optimize->add_option("--draws", opt.draws, "Draws CSV")->required()->check(CLI::ExistingFile);
  cmd_optimize->add_option("--config", opt.config, "Reward configuration JSON")->check(CLI::ExistingFile);
  cmd_optimize->add_option("--epsilon", opt.epsilon, "Zero the reward below probability 1 - epsilon")
      ->check(CLI::Range(0.0, 1.0));
  cmd_optimize->add_option("--size-transform", opt.h, "Size transform in the cost: identity or log1p");
  cmd_optimize->add_option("--alpha-grid-points", opt.alpha_grid_points, "Points of the alpha grid")
      ->check(CLI::Range(1, 100000));
  cmd_optimize->add_option("--delta0", opt.delta0, "Initial step fraction")->check(CLI::Range(0.0, 1.0));
  cmd_optimize->add_option("--delta-min", opt.delta_min, "Smallest step fraction")->check(CLI::Range(0.0, 1.0));
  cmd_optimize->add_option("--box-alpha", opt.box_alpha, "Search interval lo,hi")->delimiter(',');
  cmd_optimize->add_option("--box-t", opt.box_t, "Search interval lo,hi")->delimiter(',');
  cmd_optimize->add_option("--box-gamma", opt.box_gamma, "Search interval lo,hi")->delimiter(',');
  cmd_optimize->add_option("--box-q", opt.box_q, "Search interval lo,hi")->delimiter(',');
  cmd_optimize->add_option("--graph", opt.graph, "Write the ranking graph (DOT) when the optimum has t = q = 0");
  cmd_optimize->add_option("-o,--out", opt.out, "Report JSON")->required();
  opt.filter.add_to(cmd_optimize);
  add_workers(cmd_optimize, opt.workers);

  SimulateArgs sim;
  auto* cmd_simulate = app.add_subcommand("simulate", "Run the simulation study and write one metrics row per cell");
  cmd_simulate->add_option("--base", sim.base, "Encounter CSV to use instead of a generated league")
      ->check(CLI::ExistingFile);
  cmd_simulate->add_option("--teams", sim.study.league.teams, "Generated league: teams")->capture_default_str();
  cmd_simulate->add_option("--squad", sim.study.league.squad, "Generated league: players per team")
      ->capture_default_str();
  cmd_simulate->add_option("--encounters", sim.study.league.encounters, "Generated league: encounters")
      ->capture_default_str();
  cmd_simulate->add_option("--replicates", sim.study.replicates, "Truths per generating prior")->capture_default_str();
  cmd_simulate->add_option("--truth-priors", sim.study.truth_priors, "Generating priors k")->delimiter(',');
  cmd_simulate->add_option("--fit-priors", sim.study.fit_priors, "Fitting priors m")->delimiter(',');
  cmd_simulate->add_option("--replications", sim.study.replications, "Replication factors s")->delimiter(',');
  cmd_simulate->add_option("--chains", sim.chains, "Chains per cell fit");
  cmd_simulate->add_option("--burn-in", sim.burn_in, "Burn-in per cell chain");
  cmd_simulate->add_option("--thin", sim.thin, "Thinning per cell chain");
  cmd_simulate->add_option("--draws", sim.draws, "Kept draws per cell fit");
  cmd_simulate->add_flag("--full-scale", sim.full_scale, "50 replicates and full-length chains");
  cmd_simulate->add_option("--seed", sim.study.seed, "Random seed")->capture_default_str();
  cmd_simulate->add_option("-o,--out", sim.out, "Metrics CSV")->required();
  add_workers(cmd_simulate, sim.study.workers);

  ExportArgs exp;
  auto* cmd_export = app.add_subcommand("export", "Plot-ready exports");
  cmd_export->require_subcommand(1);
  auto* cmd_cat = cmd_export->add_subcommand("caterpillar", "Per-entity quartiles sorted by median (CSV)");
  cmd_cat->add_option("--draws", exp.draws, "Draws CSV")->required()->check(CLI::ExistingFile);
  cmd_cat->add_option("-o,--out", exp.out, "Output CSV")->required();
  exp.filter.add_to(cmd_cat);
  auto* cmd_graph = cmd_export->add_subcommand("graph", "Ranking graph (DOT) of the zero-error statement");
  cmd_graph->add_option("--draws", exp.draws, "Draws CSV")->required()->check(CLI::ExistingFile);
  Action graph_action;
  add_action(cmd_graph, graph_action, false);
  cmd_graph->add_option("-o,--out", exp.out, "Output DOT")->required();
  exp.filter.add_to(cmd_graph);
  add_workers(cmd_graph, exp.workers);

  SubsetArgs sub;
  auto* cmd_subset = app.add_subcommand("subset", "Restrict encounters to teams, or draws to entities");
  cmd_subset->add_option("--encounters", sub.encounters, "Encounter CSV")->check(CLI::ExistingFile);
  cmd_subset->add_option("--draws", sub.draws, "Draws CSV")->check(CLI::ExistingFile);
  sub.filter.add_to(cmd_subset);
  cmd_subset->add_option("-o,--out", sub.out, "Output file")->required();

  GenerateArgs gen;
  auto* cmd_generate = app.add_subcommand("generate", "Write a synthetic league as an encounter CSV");
  cmd_generate->add_option("--teams", gen.league.teams, "Teams")->capture_default_str();
  cmd_generate->add_option("--squad", gen.league.squad, "Players per team")->capture_default_str();
  cmd_generate->add_option("--encounters", gen.league.encounters, "Encounters")->capture_default_str();
  cmd_generate->add_option("--ability-sd", gen.league.ability_sd, "Ability standard deviation")->capture_default_str();
  cmd_generate->add_option("--noise-sd", gen.league.noise_sd, "Point-difference noise")->capture_default_str();
  cmd_generate->add_option("--seed", gen.league.seed, "Random seed")->capture_default_str();
  cmd_generate->add_option("-o,--out", gen.out, "Encounter CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cmd_sample) return manifest.subcommand = "sample", run_sample(sample, manifest);
    if (*cmd_statements) return manifest.subcommand = "statements", run_statements(statements, manifest);
    if (*cmd_optimize) return manifest.subcommand = "optimize", run_optimize(opt, manifest);
    if (*cmd_simulate) return manifest.subcommand = "simulate", run_simulate(sim, manifest);
    if (*cmd_cat) return manifest.subcommand = "export caterpillar", run_caterpillar(exp, manifest);
    if (*cmd_graph) {
      exp.alpha = graph_action.alpha;
      exp.gamma = graph_action.gamma;
      manifest.subcommand = "export graph";
      return run_graph(exp, manifest);
    }
    if (*cmd_subset) return manifest.subcommand = "subset", run_subset(sub, manifest);
    if (*cmd_generate) return manifest.subcommand = "generate", run_generate(gen, manifest);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
