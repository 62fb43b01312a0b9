#pragma once

#include <cstdint>
#include <vector>

#include "floydnet/graph/graph.hpp"

namespace floydnet::graph {

// Erdos-Renyi G(n, p) with integer weights drawn uniformly from [lo, hi].
// Identical arguments give bit-identical graphs.
Graph gen_random_graph(std::size_t n, double p, std::int64_t lo, std::int64_t hi, std::uint64_t seed);

// Unweighted (w = 1) structured families; no node or edge features.
Graph path_graph(std::size_t n);
Graph cycle_graph(std::size_t n);
Graph complete_graph(std::size_t n);
Graph star_graph(std::size_t leaves);
Graph circulant_graph(std::size_t n, const std::vector<std::size_t>& steps);
Graph disjoint_union(const Graph& a, const Graph& b);
Graph complement(const Graph& g);
Graph petersen_graph();
Graph prism_graph(std::size_t n);             // C_n x K_2
Graph complete_bipartite(std::size_t a, std::size_t b);

// 4x4 rook's graph: K4 x K4. SRG(16, 6, 2, 2).
Graph rook_graph_4x4();
// Shrikhande graph as the Cayley graph of Z4 x Z4 with connection set
// {+-(1,0), +-(0,1), +-(1,1)}. SRG(16, 6, 2, 2).
Graph shrikhande_graph();

// Carbon skeletons used as a classic 1-WL-hard pair (10 nodes, 11 edges):
// decalin (two fused hexagons) and bicyclopentyl (two pentagons joined by a bond).
Graph decalin_graph();
Graph bicyclopentyl_graph();

// Checks the strongly-regular parameters (n, k, lambda, mu) directly.
bool is_strongly_regular(const Graph& g, std::size_t k, std::size_t lambda, std::size_t mu);

// Gives every node the single feature value 1.0 (d_n = 1).
Graph with_unit_node_features(const Graph& g);

}  // namespace floydnet::graph
