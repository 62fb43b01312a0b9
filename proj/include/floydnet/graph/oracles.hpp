#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "floydnet/graph/graph.hpp"

namespace floydnet::graph {

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All-pairs distances. Unreachable pairs hold +infinity in `dist` and false
// in the `reachable` flag channel; training code masks on the flag.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> dist;
  std::vector<std::uint8_t> reachable;

  double at(std::size_t i, std::size_t j) const { return dist[i * n + j]; }
  bool is_reachable(std::size_t i, std::size_t j) const { return reachable[i * n + j] != 0; }
  // Largest finite distance (0 for a graph with no reachable pairs).
  double diameter() const;
};

// Exact shortest paths by the pivot recurrence d(i,k) <- min_j d(i,j) + d(j,k).
// Throws GraphError on a negative weight.
DistanceMatrix floyd_warshall_oracle(const Graph& g);

enum class CountLevel { kGraph, kNode, kEdge };

struct CycleCounts {
  std::size_t n = 0;
  std::size_t cycle_len = 0;
  double graph = 0.0;
  std::vector<double> node;  // [n]: cycles through each node
  std::vector<double> edge;  // [n*n], symmetric: cycles through each edge
};

constexpr std::size_t kMaxCycleCountNodes = 16;

// Exhaustive enumeration of simple cycles of length cycle_len in {3..6} in
// an undirected simple graph. Throws CapabilityError for n > 16.
CycleCounts cycle_count_oracle(const Graph& g, std::size_t cycle_len);

}  // namespace floydnet::graph
