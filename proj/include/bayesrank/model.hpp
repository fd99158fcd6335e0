#pragma once

// Gaussian lineup point-difference model: diff_i ~ Normal(tau_a - tau_b, sigma^2)
// with tau the sum of the five player abilities, sampled by Gibbs /
// Metropolis-within-Gibbs under three shrinkage priors.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bayesrank/draws.hpp"

namespace bayesrank {

inline constexpr int kLineupSize = 5;
using Lineup = std::array<Index, kLineupSize>;

struct Encounter {
  Lineup lineup_a{};
  Lineup lineup_b{};
  int diff = 0;  ///< points of lineup a minus points of lineup b
};

/// Prior families for the abilities. mu ~ Normal(0, mu_sd^2) and
/// pi(sigma^2) ∝ 1 / sigma^2 in all cases.
enum class PriorKind {
  laplace = 1,             ///< xi ~ Laplace(mu, laplace_scale)
  scaled_laplace = 2,      ///< xi ~ Laplace(mu, sigma / sqrt(lambda)), lambda ~ Gamma(shape, rate)
  normal_half_cauchy = 3,  ///< xi ~ Normal(mu, sigma^2 lambda), lambda ~ Half-Cauchy(0, scale)
};

struct PriorSpec {
  PriorKind kind = PriorKind::normal_half_cauchy;
  double laplace_scale = 3.0;
  double lambda_shape = 1.0;
  double lambda_rate = 1.0;
  double half_cauchy_scale = 1.0;
  double mu_sd = 3.0;

  /// Prior 1, 2 or 3 with the default constants.
  static PriorSpec numbered(int k);
  int number() const noexcept { return static_cast<int>(kind); }
  void validate() const;
};

struct SamplerConfig {
  int chains = 13;
  int burn_in = 2000;
  int thin = 20;
  int target_draws = 10000;
  std::uint64_t seed = 20091027;
  /// Per-chain iteration cap; 0 means unlimited.
  long max_iterations = 0;
  unsigned workers = 0;

  void validate() const;
  /// Kept draws of chain c; the remainder goes to the first chains.
  int kept_in_chain(int c) const;
  long iterations_in_chain(int c) const { return burn_in + static_cast<long>(kept_in_chain(c)) * thin; }
};

/// Signed incidence design with the reference player's column removed.
struct Design {
  Index players = 0;
  Index reference = 0;
  std::vector<Index> free_column;  ///< player -> column, -1 for the reference
  std::vector<Index> column_player;
  Eigen::SparseMatrix<double, Eigen::RowMajor> x;
  Eigen::VectorXd y;
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  Index rank = 0;

  Index encounters() const noexcept { return x.rows(); }
  Index free_players() const noexcept { return x.cols(); }
  /// Fewer independent rows than free abilities: the likelihood alone does
  /// not identify them and propriety rests on the prior.
  bool rank_deficient() const noexcept { return rank < free_players(); }
  /// Model mean of each encounter's diff for a full ability vector.
  Eigen::VectorXd mean(const Eigen::VectorXd& abilities) const;
};

/// Most frequently appearing player; ties go to the lexicographically
/// smallest id (or smallest index when ids are empty).
Index reference_player(std::span<const Encounter> encounters, Index players,
                       const std::vector<std::string>& ids = {});

Design build_design(std::span<const Encounter> encounters, Index players, Index reference);

struct ChainState {
  Eigen::VectorXd xi;     ///< all players; xi[reference] == 0
  double mu = 0.0;
  double sigma2 = 1.0;
  double lambda = 1.0;
  Eigen::VectorXd omega;  ///< latent mixture scales (priors 1 and 2)
};

struct SamplerDiagnostics {
  long variance_retries = 0;
  long scale_retries = 0;
  long slice_expansions = 0;
  long slice_shrinks = 0;
  long iterations = 0;

  SamplerDiagnostics& operator+=(const SamplerDiagnostics& o);
};

using Rng = std::mt19937_64;

/// Independent stream for chain `chain` of a run seeded with `seed`.
Rng chain_rng(std::uint64_t seed, std::uint64_t chain);

ChainState initial_state(const Design& design, const PriorSpec& prior, Rng& rng);

/// Gaussian full conditional of the free abilities given mu, sigma^2 and the
/// mixture scales; indices follow design.column_player.
struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
GaussianConditional xi_conditional(const ChainState& state, const Design& design, const PriorSpec& prior);

/// Prior variance of each free ability under the current state.
Eigen::VectorXd prior_variances(const ChainState& state, const Design& design, const PriorSpec& prior);

/// One systematic scan: xi block, mu, sigma^2, mixture scales, lambda.
void gibbs_step(ChainState& state, const Design& design, const PriorSpec& prior, Rng& rng,
                SamplerDiagnostics& diagnostics);

struct SamplerOutput {
  DrawsXd players;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd lambda;
  Index reference = 0;
  std::vector<double> rhat;  ///< split-chain scale reduction per player (NaN for constant columns)
  SamplerDiagnostics diagnostics;
  bool rank_deficient = false;
};

SamplerOutput run_chains(const SamplerConfig& config, std::span<const Encounter> encounters, Index players,
                         const PriorSpec& prior, std::vector<std::string> ids = {});

/// Split-chain potential scale reduction of each column. `chains` holds one
/// draws x parameters matrix per chain.
std::vector<double> split_rhat(const std::vector<Eigen::MatrixXd>& chains);

/// Sampling helpers, exposed for testing.
double sample_inverse_gaussian(double mean, double shape, Rng& rng);

/// Lineup abilities: column j is the sum of the player columns in lineups[j].
template <typename Scalar>
PosteriorDraws<Scalar> lineup_draws(const PosteriorDraws<Scalar>& players, const std::vector<Lineup>& lineups,
                                    std::vector<std::string> ids = {}) {
  if (lineups.empty()) throw InvalidInput("no lineups given");
  typename PosteriorDraws<Scalar>::Matrix v(players.draws(), static_cast<Index>(lineups.size()));
  for (std::size_t j = 0; j < lineups.size(); ++j) {
    v.col(static_cast<Index>(j)).setZero();
    for (Index p : lineups[j]) {
      if (p < 0 || p >= players.entities()) throw InvalidInput("lineup references an unknown player index");
      v.col(static_cast<Index>(j)) += players.values().col(p);
    }
  }
  if (ids.empty()) {
    for (const auto& lineup : lineups) {
      std::array<std::string, kLineupSize> keys;
      for (int k = 0; k < kLineupSize; ++k) keys[static_cast<std::size_t>(k)] = players.id(lineup[static_cast<std::size_t>(k)]);
      std::sort(keys.begin(), keys.end());
      std::string id;
      for (const auto& k : keys) id += (id.empty() ? "" : "|") + k;
      ids.push_back(std::move(id));
    }
  }
  return PosteriorDraws<Scalar>(std::move(v), std::move(ids));
}

}  // namespace bayesrank
