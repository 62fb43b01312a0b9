#include "floydnet/graph/generators.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace floydnet::graph {

Graph gen_random_graph(std::size_t n, double p, std::int64_t lo, std::int64_t hi, std::uint64_t seed) {
  if (n == 0) throw GraphError("gen_random_graph: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw GraphError("gen_random_graph: p must lie in [0, 1]");
  if (lo > hi) throw GraphError("gen_random_graph: empty weight range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> weight(lo, hi);
  Graph g(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      // Both draws are taken for every pair so the weight stream does not
      // shift with p.
      const double toss = coin(rng);
      const auto w = static_cast<double>(weight(rng));
      if (toss < p) g.add_edge(u, v, w);
    }
  }
  return g;
}

Graph path_graph(std::size_t n) {
  Graph g(n);
  for (std::size_t v = 0; v + 1 < n; ++v) g.add_edge(v, v + 1);
  return g;
}

Graph cycle_graph(std::size_t n) {
  if (n < 3) throw GraphError("cycle needs n >= 3");
  Graph g = path_graph(n);
  g.add_edge(n - 1, 0);
  return g;
}

Graph complete_graph(std::size_t n) {
  Graph g(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) g.add_edge(u, v);
  return g;
}

Graph star_graph(std::size_t leaves) {
  Graph g(leaves + 1);
  for (std::size_t v = 1; v <= leaves; ++v) g.add_edge(0, v);
  return g;
}

Graph circulant_graph(std::size_t n, const std::vector<std::size_t>& steps) {
  Graph g(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t s : steps) {
      if (s == 0 || s % n == 0) throw GraphError("circulant step must be nonzero mod n");
      g.add_edge(v, (v + s) % n);
    }
  }
  return g;
}

Graph disjoint_union(const Graph& a, const Graph& b) {
  if (a.node_dim() != b.node_dim() || a.edge_dim() != b.edge_dim()) {
    throw GraphError("disjoint_union: feature widths differ");
  }
  Graph g(a.n() + b.n(), a.node_dim(), a.edge_dim());
  auto copy = [&](const Graph& src, std::size_t shift) {
    for (std::size_t v = 0; v < src.n(); ++v) g.set_node_features(v + shift, src.node_features(v));
    for (std::size_t u = 0; u < src.n(); ++u)
      for (std::size_t v = u + 1; v < src.n(); ++v)
        if (src.has_edge(u, v)) g.add_edge(u + shift, v + shift, src.weight(u, v), src.edge_features(u, v));
  };
  copy(a, 0);
  copy(b, a.n());
  return g;
}

Graph complement(const Graph& g) {
  Graph out(g.n(), g.node_dim());
  for (std::size_t v = 0; v < g.n(); ++v) out.set_node_features(v, g.node_features(v));
  for (std::size_t u = 0; u < g.n(); ++u)
    for (std::size_t v = u + 1; v < g.n(); ++v)
      if (!g.has_edge(u, v)) out.add_edge(u, v);
  return out;
}

Graph petersen_graph() {
  Graph g(10);
  for (std::size_t i = 0; i < 5; ++i) {
    g.add_edge(i, (i + 1) % 5);          // outer pentagon
    g.add_edge(i, i + 5);                // spokes
    g.add_edge(5 + i, 5 + (i + 2) % 5);  // inner pentagram
  }
  return g;
}

Graph prism_graph(std::size_t n) {
  Graph g(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    g.add_edge(i, (i + 1) % n);
    g.add_edge(n + i, n + (i + 1) % n);
    g.add_edge(i, n + i);
  }
  return g;
}

Graph complete_bipartite(std::size_t a, std::size_t b) {
  Graph g(a + b);
  for (std::size_t u = 0; u < a; ++u)
    for (std::size_t v = 0; v < b; ++v) g.add_edge(u, a + v);
  return g;
}

Graph rook_graph_4x4() {
  Graph g(16);
  for (std::size_t u = 0; u < 16; ++u) {
    for (std::size_t v = u + 1; v < 16; ++v) {
      if (u / 4 == v / 4 || u % 4 == v % 4) g.add_edge(u, v);
    }
  }
  return g;
}

Graph shrikhande_graph() {
  Graph g(16);
  auto id = [](int r, int c) { return static_cast<std::size_t>(((r % 4 + 4) % 4) * 4 + (c % 4 + 4) % 4); };
  const int moves[3][2] = {{1, 0}, {0, 1}, {1, 1}};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      for (const auto& m : moves) g.add_edge(id(r, c), id(r + m[0], c + m[1]));
    }
  }
  return g;
}

Graph decalin_graph() {
  // Ring A: 0-1-2-3-4-5-0, ring B shares the bond 0-5: 0-6-7-8-9-5.
  Graph g(10);
  for (std::size_t v = 0; v < 5; ++v) g.add_edge(v, v + 1);
  g.add_edge(5, 0);
  g.add_edge(0, 6);
  g.add_edge(6, 7);
  g.add_edge(7, 8);
  g.add_edge(8, 9);
  g.add_edge(9, 5);
  return g;
}

Graph bicyclopentyl_graph() {
  // Pentagons 0..4 and 5..9 joined by the bond 0-5.
  Graph g(10);
  for (std::size_t v = 0; v < 5; ++v) {
    g.add_edge(v, (v + 1) % 5);
    g.add_edge(5 + v, 5 + (v + 1) % 5);
  }
  g.add_edge(0, 5);
  return g;
}

bool is_strongly_regular(const Graph& g, std::size_t k, std::size_t lambda, std::size_t mu) {
  const std::size_t n = g.n();
  for (std::size_t u = 0; u < n; ++u) {
    if (g.degree(u) != k) return false;
    for (std::size_t v = u + 1; v < n; ++v) {
      std::size_t common = 0;
      for (std::size_t w = 0; w < n; ++w) common += (g.has_edge(u, w) && g.has_edge(v, w)) ? 1 : 0;
      if (common != (g.has_edge(u, v) ? lambda : mu)) return false;
    }
  }
  return true;
}

Graph with_unit_node_features(const Graph& g) {
  Graph out(g.n(), 1, g.edge_dim(), g.graph_dim(), g.directed());
  out.set_graph_features(g.graph_feats().values());
  const double one = 1.0;
  for (std::size_t v = 0; v < g.n(); ++v) out.set_node_features(v, {&one, 1});
  for (std::size_t u = 0; u < g.n(); ++u)
    for (std::size_t v = 0; v < g.n(); ++v)
      if (g.has_edge(u, v)) out.add_edge(u, v, g.weight(u, v), g.edge_features(u, v), true);
  return out;
}

}  // namespace floydnet::graph
