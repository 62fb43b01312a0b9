#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "floydnet/graph/graph.hpp"

namespace floydnet::graph {

enum class GraphFormat { kEdgeList, kDenseMatrix };

GraphFormat parse_format(const std::string& name);

class GraphParseError : public std::runtime_error {
 public:
  GraphParseError(const std::string& message, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Edge list:
//   N [d_n d_e d_g]
//   g f1 .. f_dg          optional graph-feature line
//   v f1 .. f_dn          optional node-feature lines
//   u v w [f1 .. f_de]    edge lines (undirected, symmetrized)
// '#' starts a comment; blank lines are skipped; indices are 0-based.
// When a node line and an edge line would have the same token count, the
// first N such lines are node lines.
//
// Dense matrix:
//   N
//   N rows of N weights; every off-diagonal entry is an edge unless it reads
//   "inf" or "-". The result is undirected iff the matrix is symmetric.
Graph read_graph(std::istream& in, GraphFormat format);
Graph load_graph(const std::filesystem::path& path, GraphFormat format);

void write_edge_list(std::ostream& out, const Graph& g);

}  // namespace floydnet::graph
