#include "floydnet/graph/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace floydnet::graph {

Graph::Graph(std::size_t n, std::size_t node_dim, std::size_t edge_dim, std::size_t graph_dim, bool directed)
    : n_(n),
      directed_(directed),
      node_feats_({n, node_dim}),
      edge_feats_({n, n, edge_dim}),
      graph_feats_({graph_dim}),
      adjacency_(n * n, 0),
      weights_(n * n, 0.0) {
  if (n == 0) throw GraphError("graph must have at least one node");
}

std::size_t Graph::index(std::size_t u, std::size_t v) const {
  if (u >= n_ || v >= n_) {
    throw GraphError("node index out of range: (" + std::to_string(u) + "," + std::to_string(v) + ") with n=" +
                     std::to_string(n_));
  }
  return u * n_ + v;
}

std::size_t Graph::degree(std::size_t u) const {
  std::size_t d = 0;
  for (std::size_t v = 0; v < n_; ++v) d += has_edge(u, v) ? 1 : 0;
  return d;
}

std::size_t Graph::edge_count() const {
  const std::size_t arcs = static_cast<std::size_t>(std::count(adjacency_.begin(), adjacency_.end(), 1));
  if (directed_) return arcs;
  std::size_t loops = 0;
  for (std::size_t v = 0; v < n_; ++v) loops += has_edge(v, v) ? 1 : 0;
  return (arcs - loops) / 2 + loops;
}

void Graph::add_edge(std::size_t u, std::size_t v, double w, std::span<const double> feats, bool allow_self_loop) {
  const std::size_t uv = index(u, v);
  if (u == v && !allow_self_loop) throw GraphError("self-loop at node " + std::to_string(u));
  const std::size_t de = edge_dim();
  if (!feats.empty() && feats.size() != de) {
    throw GraphError("edge feature width " + std::to_string(feats.size()) + " != d_e " + std::to_string(de));
  }
  auto write = [&](std::size_t idx) {
    adjacency_[idx] = 1;
    weights_[idx] = w;
    for (std::size_t c = 0; c < de; ++c) edge_feats_[idx * de + c] = feats.empty() ? 0.0 : feats[c];
  };
  write(uv);
  if (!directed_) write(index(v, u));
}

void Graph::remove_edge(std::size_t u, std::size_t v) {
  auto clear = [&](std::size_t idx) {
    adjacency_[idx] = 0;
    weights_[idx] = 0.0;
    for (std::size_t c = 0; c < edge_dim(); ++c) edge_feats_[idx * edge_dim() + c] = 0.0;
  };
  clear(index(u, v));
  if (!directed_) clear(index(v, u));
}

void Graph::set_node_features(std::size_t v, std::span<const double> feats) {
  index(v, v);
  if (feats.size() != node_dim()) {
    throw GraphError("node feature width " + std::to_string(feats.size()) + " != d_n " + std::to_string(node_dim()));
  }
  std::copy(feats.begin(), feats.end(), node_feats_.data() + v * node_dim());
}

std::span<const double> Graph::node_features(std::size_t v) const {
  return {node_feats_.data() + v * node_dim(), node_dim()};
}

std::span<const double> Graph::edge_features(std::size_t u, std::size_t v) const {
  return {edge_feats_.data() + index(u, v) * edge_dim(), edge_dim()};
}

void Graph::set_graph_features(std::span<const double> feats) {
  if (feats.size() != graph_dim()) {
    throw GraphError("graph feature width " + std::to_string(feats.size()) + " != d_g " + std::to_string(graph_dim()));
  }
  std::copy(feats.begin(), feats.end(), graph_feats_.data());
}

void Graph::validate() const {
  if (n_ == 0) throw GraphError("graph must have at least one node");
  if (adjacency_.size() != n_ * n_ || weights_.size() != n_ * n_) throw GraphError("adjacency size mismatch");
  if (node_feats_.shape() != nn::Shape{n_, node_dim()} || edge_feats_.shape() != nn::Shape{n_, n_, edge_dim()}) {
    throw GraphError("feature tensor shape mismatch");
  }
  if (directed_) return;
  const std::size_t de = edge_dim();
  for (std::size_t u = 0; u < n_; ++u) {
    for (std::size_t v = u + 1; v < n_; ++v) {
      const std::size_t a = u * n_ + v, b = v * n_ + u;
      if (adjacency_[a] != adjacency_[b] || weights_[a] != weights_[b]) {
        throw GraphError("undirected graph is asymmetric at (" + std::to_string(u) + "," + std::to_string(v) + ")");
      }
      for (std::size_t c = 0; c < de; ++c) {
        if (edge_feats_[a * de + c] != edge_feats_[b * de + c]) throw GraphError("asymmetric edge features");
      }
    }
  }
}

bool operator==(const Graph& a, const Graph& b) {
  return a.n_ == b.n_ && a.directed_ == b.directed_ && a.adjacency_ == b.adjacency_ && a.weights_ == b.weights_ &&
         nn::bitwise_equal(a.node_feats_, b.node_feats_) && nn::bitwise_equal(a.edge_feats_, b.edge_feats_) &&
         nn::bitwise_equal(a.graph_feats_, b.graph_feats_);
}

NodePermutation::NodePermutation(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
  std::vector<std::size_t> sorted = perm_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw GraphError("permutation is not a bijection on 0..n-1");
  }
}

NodePermutation NodePermutation::identity(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  return NodePermutation(std::move(p));
}

NodePermutation NodePermutation::random(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the result does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return NodePermutation(std::move(p));
}

NodePermutation NodePermutation::inverse() const {
  std::vector<std::size_t> inv(perm_.size());
  for (std::size_t i = 0; i < perm_.size(); ++i) inv[perm_[i]] = i;
  return NodePermutation(std::move(inv));
}

Graph apply_permutation(const Graph& g, const NodePermutation& pi) {
  if (pi.size() != g.n()) {
    throw GraphError("permutation size " + std::to_string(pi.size()) + " != n " + std::to_string(g.n()));
  }
  const std::size_t n = g.n();
  Graph out(n, g.node_dim(), g.edge_dim(), g.graph_dim(), g.directed());
  out.set_graph_features(g.graph_feats().values());
  for (std::size_t v = 0; v < n; ++v) out.set_node_features(pi(v), g.node_features(v));
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (g.has_edge(u, v)) out.add_edge(pi(u), pi(v), g.weight(u, v), g.edge_features(u, v), true);
    }
  }
  return out;
}

}  // namespace floydnet::graph
