#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "floydnet/nn/tensor.hpp"

namespace floydnet::graph {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A problem instance: node/edge/graph features plus weighted adjacency.
// Undirected graphs keep both triangles of every pairwise array populated.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n, std::size_t node_dim = 0, std::size_t edge_dim = 0, std::size_t graph_dim = 0,
                 bool directed = false);

  std::size_t n() const { return n_; }
  bool directed() const { return directed_; }
  std::size_t node_dim() const { return node_feats_.last_dim(); }
  std::size_t edge_dim() const { return edge_feats_.last_dim(); }
  std::size_t graph_dim() const { return graph_feats_.size(); }

  bool has_edge(std::size_t u, std::size_t v) const { return adjacency_[u * n_ + v] != 0; }
  double weight(std::size_t u, std::size_t v) const { return weights_[u * n_ + v]; }
  std::size_t degree(std::size_t u) const;
  std::size_t edge_count() const;

  // Adds (or overwrites) an edge; mirrored when undirected. Self-loops are
  // rejected unless `allow_self_loop` is set.
  void add_edge(std::size_t u, std::size_t v, double w = 1.0, std::span<const double> feats = {},
                bool allow_self_loop = false);
  void remove_edge(std::size_t u, std::size_t v);

  void set_node_features(std::size_t v, std::span<const double> feats);
  std::span<const double> node_features(std::size_t v) const;
  std::span<const double> edge_features(std::size_t u, std::size_t v) const;
  void set_graph_features(std::span<const double> feats);

  const nn::Tensor& node_feats() const { return node_feats_; }
  const nn::Tensor& edge_feats() const { return edge_feats_; }
  const nn::Tensor& graph_feats() const { return graph_feats_; }
  nn::Tensor& mutable_node_feats() { return node_feats_; }

  // Throws GraphError when a documented invariant does not hold.
  void validate() const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  std::size_t index(std::size_t u, std::size_t v) const;

  std::size_t n_ = 0;
  bool directed_ = false;
  nn::Tensor node_feats_;   // [n, d_n]
  nn::Tensor edge_feats_;   // [n, n, d_e]
  nn::Tensor graph_feats_;  // [d_g]
  std::vector<std::uint8_t> adjacency_;
  std::vector<double> weights_;
};

// A bijection on {0..n-1}. Applying it relabels input node v as node perm[v].
class NodePermutation {
 public:
  explicit NodePermutation(std::vector<std::size_t> perm);
  static NodePermutation identity(std::size_t n);
  static NodePermutation random(std::size_t n, std::uint64_t seed);

  std::size_t size() const { return perm_.size(); }
  std::size_t operator()(std::size_t v) const { return perm_[v]; }
  const std::vector<std::size_t>& images() const { return perm_; }
  NodePermutation inverse() const;

 private:
  std::vector<std::size_t> perm_;
};

Graph apply_permutation(const Graph& g, const NodePermutation& pi);

}  // namespace floydnet::graph
