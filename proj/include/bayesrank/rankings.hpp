#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bayesrank/statements.hpp"

namespace bayesrank {

/// Directed edge (worse, better).
using OrderEdge = std::pair<Index, Index>;

/// Partial order implied by a zero-error statement, as its Hasse diagram.
struct RankingGraph {
  std::vector<Index> nodes;        ///< entities that take part in any comparison, ascending
  std::vector<OrderEdge> edges;    ///< transitive reduction, sorted
  std::vector<OrderEdge> closure;  ///< all implied (worse, better) pairs, sorted
  /// Maximal chains, each listed worst to best.
  std::vector<std::vector<Index>> chains;
  bool chains_truncated = false;
};

/// Raw (worse, better) pairs asserted by the member locals, deduplicated.
std::vector<OrderEdge> comparison_edges(const GlobalStatement& statement);

/// One directed cycle of the edge set, or empty when acyclic. The cycle is
/// returned as a vertex sequence whose last element points back to the first.
std::vector<Index> find_cycle(const std::vector<OrderEdge>& edges);

/// Transitive rankings of a statement with t = q = 0. Throws InvalidInput for
/// nonzero errors and CycleError when the pairwise relation is cyclic.
RankingGraph derive_rankings(const GlobalStatement& statement, std::size_t max_chains = 10000);

/// Same construction from an explicit edge list.
RankingGraph rankings_from_edges(std::vector<OrderEdge> edges, std::size_t max_chains = 10000);

}  // namespace bayesrank
