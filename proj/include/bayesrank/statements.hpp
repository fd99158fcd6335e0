#pragma once

// Elementary, local and global ordering statements estimated from posterior
// draws. Everything here is computed with integer counts over the draws; the
// real-valued probabilities are derived on demand.

#include <Eigen/Dense>

#include <algorithm>
#include <compare>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "bayesrank/draws.hpp"
#include "bayesrank/parallel.hpp"

namespace bayesrank {

/// (alpha, t, gamma, q): elementary credibility slack, local error, local
/// credibility slack, global error.
struct Action {
  double alpha = 0.0;
  double t = 0.0;
  double gamma = 0.0;
  double q = 0.0;

  auto operator<=>(const Action&) const = default;
};

/// wins(a, b) = #{ i : x_a^(i) > x_b^(i) }.
struct ComparisonCounts {
  using Matrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix wins;
  Index draws = 0;

  Index entities() const noexcept { return wins.rows(); }
  /// Draws in which a and b are exactly equal.
  Index ties(Index a, Index b) const {
    return a == b ? 0 : draws - wins(a, b) - wins(b, a);
  }
  /// Number of unordered pairs with at least one tied draw.
  Index tied_pairs() const {
    Index n = 0;
    for (Index a = 0; a < entities(); ++a)
      for (Index b = a + 1; b < entities(); ++b) n += ties(a, b) > 0;
    return n;
  }
  /// Tied (draw, pair) occurrences over all unordered pairs.
  Index tied_comparisons() const {
    Index n = 0;
    for (Index a = 0; a < entities(); ++a)
      for (Index b = a + 1; b < entities(); ++b) n += ties(a, b);
    return n;
  }
};

/// Entities credibly below / above `entity` at level alpha.
struct LocalSets {
  Index entity = 0;
  double alpha = 0.0;
  std::vector<Index> below;
  std::vector<Index> above;

  /// Number of elementary statements, |below| + |above|.
  Index size() const noexcept { return static_cast<Index>(below.size() + above.size()); }
  bool empty() const noexcept { return below.empty() && above.empty(); }
};

struct LocalStatement {
  LocalSets sets;
  double t = 0.0;
  DrawMask holds;
  Index hold_count = 0;

  Index draws() const noexcept { return holds.size(); }
  Index allowed_failures() const { return fraction::floor_of(t, sets.size()); }
  double prob() const { return static_cast<double>(hold_count) / static_cast<double>(draws()); }
};

struct GlobalStatement {
  Action action;
  Index entities = 0;  ///< L of the draws the statement was built from
  Index draws = 0;
  std::vector<Index> members;           ///< ascending entity indices
  std::vector<LocalStatement> locals;   ///< one per member, same order
  DrawMask holds;                       ///< empty until global_probability
  Index hold_count = 0;
  bool complete = false;
  double cost = 0.0;
  double reward = 0.0;

  double prob() const {
    return draws > 0 ? static_cast<double>(hold_count) / static_cast<double>(draws) : 1.0;
  }
  Index allowed_failures() const { return fraction::floor_of(action.q, static_cast<Index>(members.size())); }
  /// Minimum number of member locals that must hold in a draw.
  Index required_successes() const { return static_cast<Index>(members.size()) - allowed_failures(); }
};

namespace detail {

/// Adds, per draw, 1 for every elementary statement of (entity, below, above)
/// that fails. Ties count as failures.
template <typename Scalar, typename Counter>
void accumulate_failures(const PosteriorDraws<Scalar>& draws, Index entity, const std::vector<Index>& below,
                         const std::vector<Index>& above, Counter* failures) {
  const Index m = draws.draws();
  const Scalar* self = draws.values().col(entity).data();
  for (Index other : above) {
    const Scalar* x = draws.values().col(other).data();
    for (Index i = 0; i < m; ++i) failures[i] += static_cast<Counter>(!(x[i] > self[i]));
  }
  for (Index other : below) {
    const Scalar* x = draws.values().col(other).data();
    for (Index i = 0; i < m; ++i) failures[i] += static_cast<Counter>(!(self[i] > x[i]));
  }
}

inline void check_level(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput(std::string(name) + " must lie in [0, 1]");
}

}  // namespace detail

/// Pairwise win counts over all draws, O(M L^2). Tiled over draw chunks and
/// entity blocks so each tile's columns stay in cache.
template <typename Scalar>
ComparisonCounts count_pairwise(const PosteriorDraws<Scalar>& draws, unsigned workers = 0) {
  constexpr Index kChunk = 512;
  constexpr Index kBlock = 32;
  const Index n = draws.entities();
  const Index m = draws.draws();
  ComparisonCounts counts;
  counts.draws = m;
  counts.wins = ComparisonCounts::Matrix::Zero(n, n);
  const Index blocks = (n + kBlock - 1) / kBlock;
  // Task a-block fills wins(a, b) and wins(b, a) for a in the block and b > a.
  parallel_for(blocks, workers, [&](std::ptrdiff_t first, std::ptrdiff_t last) {
    for (Index i0 = 0; i0 < m; i0 += kChunk) {
      const Index len = std::min(kChunk, m - i0);
      for (Index ab = first; ab < last; ++ab) {
        const Index a_end = std::min(n, (ab + 1) * kBlock);
        for (Index b0 = ab * kBlock; b0 < n; b0 += kBlock) {
          const Index b_end = std::min(n, b0 + kBlock);
          for (Index a = ab * kBlock; a < a_end; ++a) {
            const Scalar* xa = draws.values().col(a).data() + i0;
            for (Index b = std::max(b0, a + 1); b < b_end; ++b) {
              const Scalar* xb = draws.values().col(b).data() + i0;
              std::int32_t gt = 0;
              std::int32_t lt = 0;
              for (Index i = 0; i < len; ++i) {
                gt += xa[i] > xb[i];
                lt += xa[i] < xb[i];
              }
              counts.wins(a, b) += gt;
              counts.wins(b, a) += lt;
            }
          }
        }
      }
    }
  });
  return counts;
}

/// Below / above sets of entity l: strict `> 1 - alpha` on the win fraction.
inline LocalSets local_sets(const ComparisonCounts& counts, Index l, double alpha) {
  detail::check_level(alpha, "alpha");
  if (l < 0 || l >= counts.entities()) throw InvalidInput("entity index out of range");
  LocalSets sets;
  sets.entity = l;
  sets.alpha = alpha;
  const double level = 1.0 - alpha;
  for (Index other = 0; other < counts.entities(); ++other) {
    if (other == l) continue;
    if (fraction::strictly_above(counts.wins(other, l), counts.draws, level)) sets.above.push_back(other);
    if (fraction::strictly_above(counts.wins(l, other), counts.draws, level)) sets.below.push_back(other);
  }
  return sets;
}

/// Per-draw indicator of the local statement: at most floor(t * n) of its n
/// elementary statements fail.
template <typename Scalar>
LocalStatement local_indicator(const PosteriorDraws<Scalar>& draws, LocalSets sets, double t) {
  detail::check_level(t, "t");
  const Index m = draws.draws();
  LocalStatement local;
  local.t = t;
  if (sets.empty()) {
    local.holds = DrawMask(m, true);
    local.hold_count = m;
    local.sets = std::move(sets);
    return local;
  }
  std::vector<std::uint32_t> failures(static_cast<std::size_t>(m), 0);
  detail::accumulate_failures(draws, sets.entity, sets.below, sets.above, failures.data());
  const auto allowed = static_cast<std::uint32_t>(fraction::floor_of(t, sets.size()));
  local.holds = DrawMask(m);
  for (Index i = 0; i < m; ++i)
    if (failures[static_cast<std::size_t>(i)] <= allowed) local.holds.set(i);
  local.hold_count = local.holds.count();
  local.sets = std::move(sets);
  return local;
}

/// Members G = { l : P(local_l) >= 1 - gamma } with their local statements;
/// the global indicator is filled in by global_probability.
template <typename Scalar>
GlobalStatement global_set(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts, double alpha,
                           double t, double gamma, unsigned workers = 0) {
  detail::check_level(gamma, "gamma");
  detail::check_level(alpha, "alpha");
  detail::check_level(t, "t");
  if (counts.entities() != draws.entities() || counts.draws != draws.draws())
    throw InvalidInput("comparison counts do not belong to these draws");
  const Index n = draws.entities();
  std::vector<LocalStatement> all(static_cast<std::size_t>(n));
  parallel_for(n, workers, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (Index l = begin; l < end; ++l)
      all[static_cast<std::size_t>(l)] = local_indicator(draws, local_sets(counts, l, alpha), t);
  });

  GlobalStatement g;
  g.action = Action{alpha, t, gamma, 0.0};
  g.entities = n;
  g.draws = draws.draws();
  for (Index l = 0; l < n; ++l) {
    auto& local = all[static_cast<std::size_t>(l)];
    if (fraction::at_least(local.hold_count, g.draws, 1.0 - gamma)) {
      g.members.push_back(l);
      g.locals.push_back(std::move(local));
    }
  }
  return g;
}

/// Completes a statement for global error q: a draw satisfies it when at
/// least |G| - floor(q |G|) member locals hold. An empty G holds everywhere.
inline GlobalStatement global_probability(GlobalStatement statement, double q) {
  detail::check_level(q, "q");
  statement.action.q = q;
  const Index m = statement.draws;
  const Index required = statement.required_successes();
  if (statement.members.empty()) {
    statement.holds = DrawMask(m, true);
  } else {
    std::vector<std::int32_t> successes(static_cast<std::size_t>(m), 0);
    for (const auto& local : statement.locals)
      for (Index i = 0; i < m; ++i) successes[static_cast<std::size_t>(i)] += local.holds.test(i);
    statement.holds = DrawMask(m);
    for (Index i = 0; i < m; ++i)
      if (successes[static_cast<std::size_t>(i)] >= required) statement.holds.set(i);
  }
  statement.hold_count = statement.holds.count();
  statement.complete = true;
  return statement;
}

/// Builds the complete statement for an action.
template <typename Scalar>
GlobalStatement build_statement(const PosteriorDraws<Scalar>& draws, const ComparisonCounts& counts,
                                const Action& a, unsigned workers = 0) {
  return global_probability(global_set(draws, counts, a.alpha, a.t, a.gamma, workers), a.q);
}

/// Whether the statement holds at a single ability vector (e.g. a known
/// truth). Entities referenced by the statement must not be tied.
template <typename Derived>
bool evaluate_at_point(const GlobalStatement& statement, const Eigen::MatrixBase<Derived>& truth) {
  if (truth.size() != statement.entities)
    throw InvalidInput("truth vector length does not match the statement's entity count");
  std::vector<Index> referenced;
  for (const auto& local : statement.locals) {
    referenced.push_back(local.sets.entity);
    referenced.insert(referenced.end(), local.sets.below.begin(), local.sets.below.end());
    referenced.insert(referenced.end(), local.sets.above.begin(), local.sets.above.end());
  }
  std::sort(referenced.begin(), referenced.end());
  referenced.erase(std::unique(referenced.begin(), referenced.end()), referenced.end());
  std::vector<double> values;
  values.reserve(referenced.size());
  for (Index l : referenced) values.push_back(static_cast<double>(truth(l)));
  std::sort(values.begin(), values.end());
  if (std::adjacent_find(values.begin(), values.end()) != values.end())
    throw InvalidInput("ordering undefined: tie among entities referenced by the statement");

  Index successes = 0;
  for (const auto& local : statement.locals) {
    const double self = static_cast<double>(truth(local.sets.entity));
    Index failures = 0;
    for (Index other : local.sets.above) failures += !(static_cast<double>(truth(other)) > self);
    for (Index other : local.sets.below) failures += !(self > static_cast<double>(truth(other)));
    successes += failures <= local.allowed_failures();
  }
  return successes >= statement.required_successes();
}

}  // namespace bayesrank
