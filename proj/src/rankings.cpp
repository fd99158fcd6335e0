#include "bayesrank/rankings.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace bayesrank {

std::vector<OrderEdge> comparison_edges(const GlobalStatement& statement) {
  std::vector<OrderEdge> edges;
  for (const auto& local : statement.locals) {
    const Index self = local.sets.entity;
    for (Index other : local.sets.below) edges.emplace_back(other, self);
    for (Index other : local.sets.above) edges.emplace_back(self, other);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

namespace {

struct Adjacency {
  std::vector<Index> nodes;
  std::map<Index, std::size_t> slot;
  std::vector<std::vector<std::size_t>> out;

  explicit Adjacency(const std::vector<OrderEdge>& edges) {
    for (const auto& [a, b] : edges) {
      nodes.push_back(a);
      nodes.push_back(b);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (std::size_t i = 0; i < nodes.size(); ++i) slot[nodes[i]] = i;
    out.resize(nodes.size());
    for (const auto& [a, b] : edges) out[slot[a]].push_back(slot[b]);
    for (auto& o : out) std::sort(o.begin(), o.end());
  }
};

}  // namespace

std::vector<Index> find_cycle(const std::vector<OrderEdge>& edges) {
  const Adjacency adj(edges);
  const std::size_t n = adj.nodes.size();
  enum class Mark { fresh, active, done };
  std::vector<Mark> mark(n, Mark::fresh);
  std::vector<std::size_t> parent(n, n);
  std::vector<Index> cycle;

  // Iterative DFS so long chains do not exhaust the stack.
  for (std::size_t root = 0; root < n && cycle.empty(); ++root) {
    if (mark[root] != Mark::fresh) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    mark[root] = Mark::active;
    while (!stack.empty() && cycle.empty()) {
      auto& [v, next] = stack.back();
      if (next < adj.out[v].size()) {
        const std::size_t w = adj.out[v][next++];
        if (mark[w] == Mark::active) {
          for (std::size_t u = v; u != w; u = parent[u]) cycle.push_back(adj.nodes[u]);
          cycle.push_back(adj.nodes[w]);
          std::reverse(cycle.begin(), cycle.end());
        } else if (mark[w] == Mark::fresh) {
          mark[w] = Mark::active;
          parent[w] = v;
          stack.emplace_back(w, 0);
        }
      } else {
        mark[v] = Mark::done;
        stack.pop_back();
      }
    }
  }
  return cycle;
}

RankingGraph rankings_from_edges(std::vector<OrderEdge> edges, std::size_t max_chains) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (auto cycle = find_cycle(edges); !cycle.empty()) {
    std::ostringstream msg;
    msg << "pairwise relation is cyclic:";
    for (Index v : cycle) msg << ' ' << v << " ->";
    msg << ' ' << cycle.front();
    throw CycleError(msg.str());
  }

  const Adjacency adj(edges);
  const std::size_t n = adj.nodes.size();
  RankingGraph graph;
  graph.nodes = adj.nodes;

  // Topological order (Kahn), then reachability sets in reverse order.
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& o : adj.out)
    for (auto w : o) ++indegree[w];
  std::vector<std::size_t> order;
  std::vector<std::size_t> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push_back(v);
  while (!ready.empty()) {
    const auto v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (auto w : adj.out[v])
      if (--indegree[w] == 0) ready.push_back(w);
  }

  // Reachability as word bitsets, filled in reverse topological order.
  const std::size_t words = (n + 63) / 64;
  std::vector<std::vector<std::uint64_t>> reach(n, std::vector<std::uint64_t>(words, 0));
  auto test = [](const std::vector<std::uint64_t>& bits, std::size_t i) { return (bits[i / 64] >> (i % 64)) & 1u; };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto v = *it;
    for (auto w : adj.out[v]) {
      reach[v][w / 64] |= std::uint64_t{1} << (w % 64);
      for (std::size_t k = 0; k < words; ++k) reach[v][k] |= reach[w][k];
    }
  }

  // Hasse successors of v: reachable from v but not from another node
  // reachable from v.
  std::vector<std::vector<std::size_t>> hasse(n);
  std::vector<std::uint64_t> indirect(words);
  for (std::size_t v = 0; v < n; ++v) {
    std::fill(indirect.begin(), indirect.end(), 0);
    for (std::size_t u = 0; u < n; ++u)
      if (test(reach[v], u))
        for (std::size_t k = 0; k < words; ++k) indirect[k] |= reach[u][k];
    for (std::size_t w = 0; w < n; ++w) {
      if (!test(reach[v], w)) continue;
      graph.closure.emplace_back(adj.nodes[v], adj.nodes[w]);
      if (!test(indirect, w)) {
        hasse[v].push_back(w);
        graph.edges.emplace_back(adj.nodes[v], adj.nodes[w]);
      }
    }
  }
  std::sort(graph.closure.begin(), graph.closure.end());
  std::sort(graph.edges.begin(), graph.edges.end());

  // Maximal chains are the source-to-sink paths of the Hasse diagram.
  std::vector<bool> has_pred(n, false);
  for (const auto& h : hasse)
    for (auto w : h) has_pred[w] = true;
  std::vector<Index> path;
  std::function<void(std::size_t)> walk = [&](std::size_t v) {
    if (graph.chains.size() >= max_chains) {
      graph.chains_truncated = true;
      return;
    }
    path.push_back(adj.nodes[v]);
    if (hasse[v].empty()) {
      graph.chains.push_back(path);
    } else {
      for (auto w : hasse[v]) walk(w);
    }
    path.pop_back();
  };
  for (std::size_t v = 0; v < n; ++v)
    if (!has_pred[v]) walk(v);
  return graph;
}

RankingGraph derive_rankings(const GlobalStatement& statement, std::size_t max_chains) {
  if (statement.action.t != 0.0 || statement.action.q != 0.0)
    throw InvalidInput("rankings need a statement with zero local and global error (t = q = 0)");
  return rankings_from_edges(comparison_edges(statement), max_chains);
}

}  // namespace bayesrank
