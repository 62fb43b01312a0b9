#include "floydnet/graph/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace floydnet::graph {

double DistanceMatrix::diameter() const {
  double d = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (reachable[i]) d = std::max(d, dist[i]);
  }
  return d;
}

DistanceMatrix floyd_warshall_oracle(const Graph& g) {
  const std::size_t n = g.n();
  const double inf = std::numeric_limits<double>::infinity();
  DistanceMatrix out{n, std::vector<double>(n * n, inf), std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t u = 0; u < n; ++u) {
    out.dist[u * n + u] = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v || !g.has_edge(u, v)) continue;
      const double w = g.weight(u, v);
      if (w < 0.0) throw GraphError("floyd_warshall_oracle: negative edge weight");
      out.dist[u * n + v] = std::min(out.dist[u * n + v], w);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double dij = out.dist[i * n + j];
      if (dij == inf) continue;
      for (std::size_t k = 0; k < n; ++k) {
        const double cand = dij + out.dist[j * n + k];
        if (cand < out.dist[i * n + k]) out.dist[i * n + k] = cand;
      }
    }
  }
  for (std::size_t i = 0; i < n * n; ++i) out.reachable[i] = std::isfinite(out.dist[i]) ? 1 : 0;
  return out;
}

namespace {

struct CycleSearch {
  const Graph& g;
  std::size_t len;
  CycleCounts& counts;
  std::vector<std::size_t> path;
  std::vector<std::uint8_t> on_path;

  // Extends paths that start at path[0] and only visit larger labels, so
  // each cycle is discovered from its minimum vertex, once per direction.
  void extend() {
    const std::size_t start = path.front();
    const std::size_t last = path.back();
    if (path.size() == len) {
      if (g.has_edge(last, start)) record();
      return;
    }
    for (std::size_t v = start + 1; v < g.n(); ++v) {
      if (on_path[v] || !g.has_edge(last, v)) continue;
      path.push_back(v);
      on_path[v] = 1;
      extend();
      on_path[v] = 0;
      path.pop_back();
    }
  }

  void record() {
    // Each undirected cycle is found twice (both orientations).
    const double half = 0.5;
    const std::size_t n = g.n();
    counts.graph += half;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t a = path[i];
      const std::size_t b = path[(i + 1) % len];
      counts.node[a] += half;
      counts.edge[a * n + b] += half;
      counts.edge[b * n + a] += half;
    }
  }
};

}  // namespace

CycleCounts cycle_count_oracle(const Graph& g, std::size_t cycle_len) {
  if (cycle_len < 3 || cycle_len > 6) throw std::invalid_argument("cycle_len must be in 3..6");
  if (g.directed()) throw GraphError("cycle_count_oracle requires an undirected graph");
  if (g.n() > kMaxCycleCountNodes) {
    throw CapabilityError("cycle_count_oracle enumerates exhaustively and supports n <= " +
                          std::to_string(kMaxCycleCountNodes) + ", got n=" + std::to_string(g.n()));
  }
  for (std::size_t v = 0; v < g.n(); ++v) {
    if (g.has_edge(v, v)) throw GraphError("cycle_count_oracle requires a simple graph (self-loop found)");
  }
  const std::size_t n = g.n();
  CycleCounts counts{n, cycle_len, 0.0, std::vector<double>(n, 0.0), std::vector<double>(n * n, 0.0)};
  CycleSearch search{g, cycle_len, counts, {}, std::vector<std::uint8_t>(n, 0)};
  for (std::size_t s = 0; s < n; ++s) {
    search.path = {s};
    search.on_path[s] = 1;
    search.extend();
    search.on_path[s] = 0;
  }
  return counts;
}

}  // namespace floydnet::graph
