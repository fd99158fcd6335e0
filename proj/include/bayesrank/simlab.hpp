#pragma once

// Simulation study: truths drawn from a fitted posterior, synthetic
// point differences on the observed encounters, refits, and statement metrics.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bayesrank/io.hpp"
#include "bayesrank/model.hpp"
#include "bayesrank/reward.hpp"

namespace bayesrank {

/// Synthetic league standing in for an observed season.
struct LeagueConfig {
  int teams = 5;
  int squad = 16;
  int encounters = 844;
  double ability_sd = 1.0;
  double noise_sd = 6.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Encounters between random pairs of teams; lineups favour each team's
/// top-ranked players, and diffs follow the Gaussian model with abilities
/// drawn from Normal(0, ability_sd^2).
std::vector<EncounterRecord> generate_league(const LeagueConfig& config);

struct Truth {
  Eigen::VectorXd xi;
  double sigma2 = 1.0;
  Index row = 0;  ///< source row in the fitted draws
};

/// `count` distinct rows chosen uniformly, paired with their sigma^2 draws.
std::vector<Truth> draw_truths(const DrawsXd& draws, const Eigen::VectorXd& sigma2, int count, std::uint64_t seed);

/// New diffs for the observed encounters, rounded to integers; with s = 2 a
/// second independent copy of every encounter is appended. Points are written
/// as (max(diff, 0), max(-diff, 0)).
EncounterTable simulate_dataset(const EncounterTable& base, const Truth& truth, int s, std::uint64_t seed);

struct SimDesign {
  int k = 3;  ///< prior that generated the truth
  int m = 3;  ///< prior used for fitting
  int d = 5;  ///< league size label (team count)
  int s = 1;  ///< replication factor
  int j = 0;  ///< replicate index
  std::uint64_t seed = 1;

  void validate() const;
  std::string tag() const;
};

struct SimMetrics {
  double statement_prob = 0.0;
  bool covered = false;
  Index members = 0;
  Index n_locals = 0;                   ///< members with a non-empty local statement
  double mean_entities_per_local = 0.0; ///< mean |below| + |above| over members
  Action action;
  double reward = 0.0;
  double max_rhat = 0.0;
  double wall_time = 0.0;               ///< seconds
};

struct CellSettings {
  SamplerConfig sampler;
  RewardConfig reward;

  /// Desk-scale sampler and the default reward with a 0.9 credibility floor.
  static CellSettings desk();
};

/// Fits prior m to a dataset simulated from `truth`, optimises the statement
/// and checks it at the truth. Errors are rethrown tagged with the cell.
SimMetrics run_cell(const SimDesign& design, const EncounterTable& base, const Truth& truth,
                    const CellSettings& settings);

struct StudyConfig {
  LeagueConfig league;
  int replicates = 5;
  std::vector<int> truth_priors{1, 2, 3};
  std::vector<int> fit_priors{1, 2, 3};
  std::vector<int> replications{1, 2};
  CellSettings cell = CellSettings::desk();
  /// Sampler used to fit the base data when drawing truths.
  SamplerConfig truth_sampler;
  unsigned workers = 0;
  std::uint64_t seed = 1;

  static StudyConfig desk();
  /// 50 replicates, default-length chains.
  static StudyConfig full();
  void validate() const;
};

struct StudyRow {
  SimDesign design;
  SimMetrics metrics;
};

/// Every (k, j, s, m) cell, in that nesting order; cells run in parallel.
std::vector<StudyRow> run_study(const StudyConfig& config);
std::vector<StudyRow> run_study(const StudyConfig& config, const EncounterTable& base);

void write_metrics(std::ostream& out, const std::vector<StudyRow>& rows);

}  // namespace bayesrank
