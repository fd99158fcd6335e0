#include "bayesrank/simlab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "bayesrank/parallel.hpp"

namespace bayesrank {

namespace {

/// Seed for one purpose within a cell, independent of evaluation order.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

enum Purpose : std::uint64_t { kSimulate = 1, kFit = 2, kTruthFit = 3, kTruthPick = 4 };

std::string two_digits(int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

void check_prior_index(int v, const char* name) {
  if (v < 1 || v > 3) throw InvalidInput(std::string(name) + " must be 1, 2 or 3");
}

}  // namespace

void LeagueConfig::validate() const {
  if (teams < 2) throw InvalidInput("a league needs at least two teams");
  if (squad < kLineupSize) throw InvalidInput("squads need at least five players");
  if (encounters < 1) throw InvalidInput("at least one encounter is required");
  if (!(ability_sd >= 0.0) || !(noise_sd >= 0.0)) throw InvalidInput("standard deviations must be non-negative");
}

std::vector<EncounterRecord> generate_league(const LeagueConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto squad = static_cast<std::size_t>(config.squad);

  std::vector<std::vector<double>> ability(static_cast<std::size_t>(config.teams), std::vector<double>(squad));
  for (auto& team : ability)
    for (auto& a : team) a = config.ability_sd * z(rng);

  std::vector<double> weight(squad);
  for (std::size_t p = 0; p < squad; ++p) weight[p] = 1.0 / (static_cast<double>(p) + 2.0);
  auto pick_lineup = [&]() {
    std::vector<double> w = weight;
    std::array<std::size_t, kLineupSize> lineup{};
    for (auto& slot : lineup) {
      std::discrete_distribution<std::size_t> d(w.begin(), w.end());
      slot = d(rng);
      w[slot] = 0.0;
    }
    return lineup;
  };

  std::uniform_int_distribution<int> team(0, config.teams - 1);
  std::uniform_int_distribution<int> base_points(0, 4);
  std::vector<EncounterRecord> records;
  for (int i = 0; i < config.encounters; ++i) {
    const int ta = team(rng);
    int tb = team(rng);
    while (tb == ta) tb = team(rng);
    const auto la = pick_lineup();
    const auto lb = pick_lineup();
    EncounterRecord r;
    r.encounter_id = "g" + std::to_string(i + 1);
    r.team_a = "T" + two_digits(ta + 1);
    r.team_b = "T" + two_digits(tb + 1);
    double mean = 0.0;
    for (std::size_t k = 0; k < kLineupSize; ++k) {
      r.players_a[k] = "P" + two_digits(static_cast<int>(la[k]) + 1);
      r.players_b[k] = "P" + two_digits(static_cast<int>(lb[k]) + 1);
      mean += ability[static_cast<std::size_t>(ta)][la[k]] - ability[static_cast<std::size_t>(tb)][lb[k]];
    }
    const int diff = static_cast<int>(std::lround(mean + config.noise_sd * z(rng)));
    const int base = base_points(rng);
    r.points_a = base + std::max(diff, 0);
    r.points_b = base + std::max(-diff, 0);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Truth> draw_truths(const DrawsXd& draws, const Eigen::VectorXd& sigma2, int count, std::uint64_t seed) {
  if (sigma2.size() != draws.draws()) throw InvalidInput("sigma^2 draws do not pair with the ability draws");
  if (count < 1) throw InvalidInput("truth count must be at least 1");
  if (count > draws.draws())
    throw InvalidInput("cannot select " + std::to_string(count) + " distinct rows from " +
                       std::to_string(draws.draws()) + " draws");
  std::mt19937_64 rng(seed);
  std::vector<Index> rows(static_cast<std::size_t>(draws.draws()));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::vector<Truth> out;
  for (int i = 0; i < count; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::uniform_int_distribution<std::size_t> pick(ui, rows.size() - 1);
    std::swap(rows[ui], rows[pick(rng)]);
    const Index r = rows[ui];
    out.push_back({draws.values().row(r).transpose(), sigma2(r), r});
  }
  return out;
}

EncounterTable simulate_dataset(const EncounterTable& base, const Truth& truth, int s, std::uint64_t seed) {
  if (s != 1 && s != 2) throw InvalidInput("replication factor must be 1 or 2");
  if (truth.xi.size() != base.registry.players()) throw InvalidInput("truth dimension does not match the registry");
  if (!(truth.sigma2 >= 0.0)) throw InvalidInput("truth variance must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const double sd = std::sqrt(truth.sigma2);
  std::vector<EncounterRecord> records;
  records.reserve(base.size() * static_cast<std::size_t>(s));
  for (int copy = 1; copy <= s; ++copy)
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto& e = base.encounters[i];
      double mean = 0.0;
      for (Index p : e.lineup_a) mean += truth.xi(p);
      for (Index p : e.lineup_b) mean -= truth.xi(p);
      const int diff = static_cast<int>(std::lround(mean + sd * z(rng)));
      EncounterRecord r = base.records[i];
      if (copy > 1) r.encounter_id += "_r" + std::to_string(copy);
      r.points_a = std::max(diff, 0);
      r.points_b = std::max(-diff, 0);
      records.push_back(std::move(r));
    }
  return index_encounters(std::move(records));
}

void SimDesign::validate() const {
  check_prior_index(k, "truth prior k");
  check_prior_index(m, "fitting prior m");
  if (s != 1 && s != 2) throw InvalidInput("replication factor s must be 1 or 2");
  if (j < 0) throw InvalidInput("replicate index must be non-negative");
}

std::string SimDesign::tag() const {
  return "cell(k=" + std::to_string(k) + ",m=" + std::to_string(m) + ",d=" + std::to_string(d) +
         ",s=" + std::to_string(s) + ",j=" + std::to_string(j) + ")";
}

CellSettings CellSettings::desk() {
  CellSettings c;
  c.sampler.chains = 4;
  c.sampler.burn_in = 500;
  c.sampler.thin = 2;
  c.sampler.target_draws = 2000;
  c.sampler.workers = 1;
  c.reward = RewardConfig::defaults();
  c.reward.epsilon = 0.1;
  return c;
}

SimMetrics run_cell(const SimDesign& design, const EncounterTable& base, const Truth& truth,
                    const CellSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  try {
    design.validate();
    const auto cell_seed = [&](std::uint64_t purpose) {
      return derive_seed({design.seed, purpose, static_cast<std::uint64_t>(design.k),
                          static_cast<std::uint64_t>(design.m), static_cast<std::uint64_t>(design.s),
                          static_cast<std::uint64_t>(design.j)});
    };
    // The simulated data depend on (k, j, s) only, so every fitting prior sees the same dataset.
    const auto data_seed = derive_seed({design.seed, kSimulate, static_cast<std::uint64_t>(design.k),
                                        static_cast<std::uint64_t>(design.s), static_cast<std::uint64_t>(design.j)});
    const EncounterTable data = simulate_dataset(base, truth, design.s, data_seed);

    SamplerConfig sampler = settings.sampler;
    sampler.seed = cell_seed(kFit);
    const auto fit = run_chains(sampler, data.encounters, data.registry.players(), PriorSpec::numbered(design.m),
                                data.registry.player_ids());

    const unsigned workers = settings.sampler.workers;
    const auto counts = count_pairwise(fit.players, workers);
    StatementEvaluator evaluator(fit.players, counts, settings.reward, workers);
    const SearchResult best = optimize(evaluator);

    SimMetrics m;
    m.statement_prob = best.statement.prob();
    m.covered = evaluate_at_point(best.statement, truth.xi);
    m.members = static_cast<Index>(best.statement.members.size());
    double entities = 0.0;
    for (const auto& local : best.statement.locals) {
      m.n_locals += !local.sets.empty();
      entities += static_cast<double>(local.sets.size());
    }
    m.mean_entities_per_local = m.members > 0 ? entities / static_cast<double>(m.members) : 0.0;
    m.action = best.action;
    m.reward = best.reward;
    for (double r : fit.rhat)
      if (std::isfinite(r)) m.max_rhat = std::max(m.max_rhat, r);
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
  } catch (const InvalidInput& e) {
    throw InvalidInput(design.tag() + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(design.tag() + ": " + e.what());
  }
}

StudyConfig StudyConfig::desk() {
  StudyConfig c;
  c.truth_sampler.chains = 4;
  c.truth_sampler.burn_in = 1000;
  c.truth_sampler.thin = 5;
  c.truth_sampler.target_draws = 2000;
  return c;
}

StudyConfig StudyConfig::full() {
  StudyConfig c = desk();
  c.replicates = 50;
  c.cell.sampler = SamplerConfig{};
  c.cell.sampler.workers = 1;
  c.truth_sampler = SamplerConfig{};
  return c;
}

void StudyConfig::validate() const {
  league.validate();
  if (replicates < 1) throw InvalidInput("replicates must be at least 1");
  if (truth_priors.empty() || fit_priors.empty() || replications.empty())
    throw InvalidInput("study needs at least one truth prior, fitting prior and replication factor");
  for (int k : truth_priors) check_prior_index(k, "truth prior");
  for (int m : fit_priors) check_prior_index(m, "fitting prior");
  for (int s : replications)
    if (s != 1 && s != 2) throw InvalidInput("replication factors must be 1 or 2");
  cell.sampler.validate();
  cell.reward.validate();
  truth_sampler.validate();
  if (truth_sampler.target_draws < replicates) throw InvalidInput("truth fit yields fewer draws than replicates");
}

std::vector<StudyRow> run_study(const StudyConfig& config) {
  config.validate();
  LeagueConfig league = config.league;
  return run_study(config, index_encounters(generate_league(league)));
}

std::vector<StudyRow> run_study(const StudyConfig& config, const EncounterTable& base) {
  config.validate();
  if (base.size() == 0) throw InvalidInput("base data set has no encounters");

  std::vector<std::vector<Truth>> truths;
  for (int k : config.truth_priors) {
    SamplerConfig sampler = config.truth_sampler;
    sampler.seed = derive_seed({config.seed, kTruthFit, static_cast<std::uint64_t>(k)});
    sampler.workers = config.workers;
    const auto fit = run_chains(sampler, base.encounters, base.registry.players(), PriorSpec::numbered(k),
                                base.registry.player_ids());
    truths.push_back(draw_truths(fit.players, fit.sigma2, config.replicates,
                                 derive_seed({config.seed, kTruthPick, static_cast<std::uint64_t>(k)})));
  }

  struct Job {
    SimDesign design;
    const Truth* truth;
  };
  std::vector<Job> jobs;
  for (std::size_t ki = 0; ki < config.truth_priors.size(); ++ki)
    for (int j = 0; j < config.replicates; ++j)
      for (int s : config.replications)
        for (int m : config.fit_priors) {
          SimDesign d;
          d.k = config.truth_priors[ki];
          d.m = m;
          d.d = static_cast<int>(base.registry.teams().size());
          d.s = s;
          d.j = j;
          d.seed = config.seed;
          jobs.push_back({d, &truths[ki][static_cast<std::size_t>(j)]});
        }

  CellSettings cell = config.cell;
  cell.sampler.workers = 1;
  std::vector<StudyRow> rows(jobs.size());
  parallel_for(static_cast<std::ptrdiff_t>(jobs.size()), config.workers, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (std::ptrdiff_t i = b; i < e; ++i) {
      const auto& job = jobs[static_cast<std::size_t>(i)];
      rows[static_cast<std::size_t>(i)] = {job.design, run_cell(job.design, base, *job.truth, cell)};
    }
  });
  return rows;
}

void write_metrics(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "k,m,d,s,j,seed,prob,covered,members,n_locals,mean_entities_per_local,alpha,t,gamma,q,reward,max_rhat,"
         "wall_time\n";
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    const auto& d = r.design;
    const auto& m = r.metrics;
    out << d.k << ',' << d.m << ',' << d.d << ',' << d.s << ',' << d.j << ',' << d.seed << ',' << num(m.statement_prob)
        << ',' << (m.covered ? 1 : 0) << ',' << m.members << ',' << m.n_locals << ','
        << num(m.mean_entities_per_local) << ',' << num(m.action.alpha) << ',' << num(m.action.t) << ','
        << num(m.action.gamma) << ',' << num(m.action.q) << ',' << num(m.reward) << ',' << num(m.max_rhat) << ','
        << num(m.wall_time) << '\n';
  }
}

}  // namespace bayesrank
