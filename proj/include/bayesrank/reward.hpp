#pragma once

// Reward of a global statement and its maximisation over actions
// (alpha, t, gamma, q) by multi-start pattern search.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bayesrank/statements.hpp"

namespace bayesrank {

/// Monotone transform applied to set sizes in the cost.
enum class SizeTransform { identity, log1p };

double apply(SizeTransform h, double x);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct RewardConfig {
  SizeTransform h = SizeTransform::identity;
  /// Rewards of statements with probability below 1 - epsilon are zeroed.
  std::optional<double> epsilon;
  /// Search box for (alpha, t, gamma, q).
  std::array<Interval, 4> box{{{0.0, 0.05}, {0.0, 0.1}, {0.0, 0.5}, {0.0, 0.1}}};
  /// Admissible alpha values, increasing, starting at 0.
  std::vector<double> alpha_grid;
  /// Empty means default_starts().
  std::vector<Action> starts;
  double delta0 = 0.25;
  double delta_min = 1.0 / 1024.0;

  /// Default box with the 21-point alpha grid over [0, 0.05].
  static RewardConfig defaults();
  void validate() const;
};

/// `points` equally spaced values from lo to hi inclusive.
std::vector<double> uniform_grid(double lo, double hi, int points);

/// Box corners plus the box centre, alpha snapped to the grid, duplicates removed.
std::vector<Action> default_starts(const RewardConfig& config);

/// {h(|G|) - h(floor(q|G|))} * sum_l {h(n_l) - h(floor(t n_l))}, with n_l the
/// number of elementary statements of member l.
double cost(const GlobalStatement& statement, SizeTransform h);

/// cost * prob, or 0 when prob < 1 - epsilon.
double reward(const GlobalStatement& statement, const RewardConfig& config);

/// Fills statement.cost and statement.reward.
GlobalStatement& score(GlobalStatement& statement, const RewardConfig& config);

/// Per-draw failure counts of every local statement at every grid alpha,
/// computed incrementally: the local sets are nested in alpha, so each
/// elementary comparison is evaluated once.
class FailureTable {
 public:
  template <typename Scalar>
  FailureTable(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts, std::vector<double> alpha_grid,
               unsigned workers = 0);

  Index draws() const noexcept { return draws_; }
  Index entities() const noexcept { return entities_; }
  const std::vector<double>& alpha_grid() const noexcept { return alpha_grid_; }
  std::size_t levels() const noexcept { return alpha_grid_.size(); }

  /// Number of elementary statements of entity l at grid level k.
  Index statement_count(std::size_t k, Index l) const {
    return entry_prefix_[static_cast<std::size_t>(l)][k];
  }
  /// Failure counts per draw, or nullptr when the local statement is empty.
  const std::uint16_t* failures(std::size_t k, Index l) const {
    const auto s = slot_[static_cast<std::size_t>(l)][k];
    return s < 0 ? nullptr : pool_[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)].data();
  }
  LocalSets sets(std::size_t k, Index l) const;

 private:
  struct Entry {
    Index other;
    bool above;
    std::uint32_t level;
  };

  Index draws_ = 0;
  Index entities_ = 0;
  std::vector<double> alpha_grid_;
  std::vector<std::vector<Entry>> entries_;             // [l], sorted by level then other
  std::vector<std::vector<Index>> entry_prefix_;        // [l][k]
  std::vector<std::vector<std::int32_t>> slot_;         // [l][k]
  std::vector<std::vector<std::vector<std::uint16_t>>> pool_;  // [l][slot][draw]
};

/// Memoised reward evaluation over a FailureTable. Rewards depend on (t, gamma,
/// q) only through integer thresholds, so evaluations are cached on those.
class StatementEvaluator {
 public:
  StatementEvaluator(std::shared_ptr<const FailureTable> table, RewardConfig config, unsigned workers = 0);

  template <typename Scalar>
  StatementEvaluator(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts, RewardConfig config,
                     unsigned workers = 0)
      : StatementEvaluator(std::make_shared<const FailureTable>(draws, counts, effective_grid(config), workers),
                           std::move(config), workers) {}

  const RewardConfig& config() const noexcept { return config_; }
  const FailureTable& table() const noexcept { return *table_; }

  /// Nearest grid index (lower one on exact midpoints).
  std::size_t alpha_index(double alpha) const;
  /// Action with alpha replaced by its nearest grid value.
  Action snap(Action a) const;

  double reward(const Action& a);
  /// Posterior probability of the statement at a.
  double probability(const Action& a);
  /// Complete, scored statement; identical to build_statement + score.
  GlobalStatement statement(const Action& a);

  std::size_t evaluations() const noexcept { return evaluations_; }

  /// The configured alpha grid, or 21 points over the box's alpha interval.
  static std::vector<double> effective_grid(const RewardConfig& config);

 private:
  struct LocalLevel {
    std::vector<Index> hold_count;
    std::vector<DrawMask> holds;
  };
  struct GlobalLevel {
    Index members = 0;
    double local_terms = 0.0;
    std::vector<Index> at_least;  // at_least[s] = draws with >= s member locals holding
  };
  struct Evaluation {
    std::shared_ptr<const GlobalLevel> global;
    Index allowed_global_failures = 0;
  };

  std::pair<std::int32_t, std::vector<std::int32_t>> local_key(std::size_t k, double t);
  std::shared_ptr<const LocalLevel> local_level(std::size_t k, std::int32_t key_id,
                                                const std::vector<std::int32_t>& allowed);
  Evaluation evaluate(const Action& a);
  double reward_of(const Evaluation& e) const;

  std::shared_ptr<const FailureTable> table_;
  RewardConfig config_;
  unsigned workers_;
  std::size_t evaluations_ = 0;

  std::map<std::pair<std::size_t, std::vector<std::int32_t>>, std::int32_t> local_ids_;
  std::unordered_map<std::int32_t, std::shared_ptr<const LocalLevel>> local_cache_;
  std::vector<std::int32_t> local_fifo_;
  std::map<std::pair<std::int32_t, Index>, std::shared_ptr<const GlobalLevel>> global_cache_;
};

struct SearchResult {
  Action action;
  double reward = 0.0;
  GlobalStatement statement;
  std::size_t iterations = 0;
};

/// Pattern search from one start: evaluate the 3^4 coordinate perturbations
/// of size delta (per-coordinate step delta * box width, clamped to the box,
/// alpha snapped to the grid), move to the best strict improvement, otherwise
/// halve delta; stop once delta / 2 < delta_min.
SearchResult pattern_search(StatementEvaluator& evaluator, const Action& start);

template <typename Scalar>
SearchResult pattern_search(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts,
                            const RewardConfig& config, const Action& start) {
  StatementEvaluator evaluator(draws, counts, config);
  return pattern_search(evaluator, start);
}

/// Best pattern-search result over all configured starts. Ties resolve to the
/// lexicographically smallest action.
SearchResult optimize(StatementEvaluator& evaluator);

template <typename Scalar>
SearchResult optimize(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts,
                      const RewardConfig& config, unsigned workers = 0) {
  StatementEvaluator evaluator(draws, counts, config, workers);
  return optimize(evaluator);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
FailureTable::FailureTable(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts,
                           std::vector<double> alpha_grid, unsigned workers)
    : draws_(draws.draws()), entities_(draws.entities()), alpha_grid_(std::move(alpha_grid)) {
  if (counts.entities() != entities_ || counts.draws != draws_)
    throw InvalidInput("comparison counts do not belong to these draws");
  if (alpha_grid_.empty()) throw InvalidInput("alpha grid is empty");
  for (std::size_t k = 0; k < alpha_grid_.size(); ++k) {
    detail::check_level(alpha_grid_[k], "alpha");
    if (k > 0 && !(alpha_grid_[k] > alpha_grid_[k - 1])) throw InvalidInput("alpha grid must be increasing");
  }
  if (2 * (entities_ - 1) > 0xFFFF) throw InvalidInput("too many entities for 16-bit failure counts");

  const std::size_t n = static_cast<std::size_t>(entities_);
  const std::size_t levels = alpha_grid_.size();
  entries_.resize(n);
  entry_prefix_.assign(n, std::vector<Index>(levels, 0));
  slot_.assign(n, std::vector<std::int32_t>(levels, -1));
  pool_.resize(n);

  // First grid level at which a win count clears the strict 1 - alpha bar.
  auto first_level = [&](Index wins) -> std::optional<std::uint32_t> {
    for (std::size_t k = 0; k < levels; ++k)
      if (fraction::strictly_above(wins, draws_, 1.0 - alpha_grid_[k])) return static_cast<std::uint32_t>(k);
    return std::nullopt;
  };

  parallel_for(entities_, workers, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (Index l = begin; l < end; ++l) {
      auto& entries = entries_[static_cast<std::size_t>(l)];
      for (Index other = 0; other < entities_; ++other) {
        if (other == l) continue;
        if (auto k = first_level(counts.wins(other, l))) entries.push_back({other, true, *k});
        if (auto k = first_level(counts.wins(l, other))) entries.push_back({other, false, *k});
      }
      std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.level, a.other, a.above) < std::tie(b.level, b.other, b.above);
      });

      auto& prefix = entry_prefix_[static_cast<std::size_t>(l)];
      auto& slots = slot_[static_cast<std::size_t>(l)];
      auto& pool = pool_[static_cast<std::size_t>(l)];
      std::size_t next = 0;
      for (std::size_t k = 0; k < levels; ++k) {
        std::vector<Index> below;
        std::vector<Index> above;
        while (next < entries.size() && entries[next].level == k) {
          (entries[next].above ? above : below).push_back(entries[next].other);
          ++next;
        }
        prefix[k] = static_cast<Index>(next);
        if (next == 0) continue;
        if (below.empty() && above.empty()) {
          slots[k] = slots[k - 1];
          continue;
        }
        std::vector<std::uint16_t> failures =
            pool.empty() ? std::vector<std::uint16_t>(static_cast<std::size_t>(draws_), 0) : pool.back();
        detail::accumulate_failures(draws, l, below, above, failures.data());
        pool.push_back(std::move(failures));
        slots[k] = static_cast<std::int32_t>(pool.size() - 1);
      }
    }
  });
}

}  // namespace bayesrank
