#include "floydnet/graph/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace floydnet::graph {
namespace {

struct Line {
  std::size_t number = 0;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::istream& in) {
  std::vector<Line> lines;
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    Line line{number, {}};
    for (std::string tok; ls >> tok;) line.tokens.push_back(tok);
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::size_t to_index(const std::string& tok, std::size_t line) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw GraphParseError("expected a non-negative integer, got '" + tok + "'", line);
  }
  return value;
}

double to_real(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw GraphParseError("expected a real number, got '" + tok + "'", line);
  }
}

std::vector<double> reals(const Line& line, std::size_t first) {
  std::vector<double> out;
  for (std::size_t i = first; i < line.tokens.size(); ++i) out.push_back(to_real(line.tokens[i], line.number));
  return out;
}

std::size_t check_node(std::size_t v, std::size_t n, std::size_t line) {
  if (v >= n) {
    throw GraphParseError("node index " + std::to_string(v) + " out of range for n=" + std::to_string(n), line);
  }
  return v;
}

Graph read_edge_list(const std::vector<Line>& lines) {
  if (lines.empty()) throw GraphParseError("missing header line", 0);
  const Line& header = lines.front();
  if (header.tokens.size() != 1 && header.tokens.size() != 4) {
    throw GraphParseError("header must be 'N' or 'N d_n d_e d_g'", header.number);
  }
  const std::size_t n = to_index(header.tokens[0], header.number);
  if (n == 0) throw GraphParseError("graph must have at least one node", header.number);
  std::size_t dn = 0, de = 0, dg = 0;
  if (header.tokens.size() == 4) {
    dn = to_index(header.tokens[1], header.number);
    de = to_index(header.tokens[2], header.number);
    dg = to_index(header.tokens[3], header.number);
  }
  Graph g(n, dn, de, dg);

  const std::size_t node_tokens = 1 + dn;
  const std::size_t edge_tokens = 3 + de;
  std::size_t node_lines = 0;
  bool edges_started = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    const auto& t = line.tokens;
    if (t[0] == "g") {
      if (t.size() != 1 + dg) {
        throw GraphParseError("graph feature line needs " + std::to_string(dg) + " values", line.number);
      }
      g.set_graph_features(reals(line, 1));
      continue;
    }
    const bool could_be_node = dn > 0 && t.size() == node_tokens && !edges_started;
    const bool could_be_edge = t.size() == edge_tokens;
    if (could_be_node && (!could_be_edge || node_lines < n)) {
      const std::size_t v = check_node(to_index(t[0], line.number), n, line.number);
      g.set_node_features(v, reals(line, 1));
      ++node_lines;
      continue;
    }
    if (!could_be_edge) {
      throw GraphParseError("expected " + std::to_string(edge_tokens) + " tokens on an edge line, got " +
                                std::to_string(t.size()),
                            line.number);
    }
    edges_started = true;
    const std::size_t u = check_node(to_index(t[0], line.number), n, line.number);
    const std::size_t v = check_node(to_index(t[1], line.number), n, line.number);
    if (u == v) throw GraphParseError("self-loop at node " + std::to_string(u), line.number);
    const double w = to_real(t[2], line.number);
    const std::vector<double> feats = reals(line, 3);
    g.add_edge(u, v, w, feats);
  }
  return g;
}

Graph read_dense(const std::vector<Line>& lines) {
  if (lines.empty()) throw GraphParseError("missing header line", 0);
  const Line& header = lines.front();
  if (header.tokens.size() != 1) throw GraphParseError("dense header must be a single 'N'", header.number);
  const std::size_t n = to_index(header.tokens[0], header.number);
  if (n == 0) throw GraphParseError("graph must have at least one node", header.number);
  if (lines.size() != n + 1) {
    throw GraphParseError("expected " + std::to_string(n) + " matrix rows, found " + std::to_string(lines.size() - 1),
                          lines.back().number);
  }
  const double absent = std::numeric_limits<double>::infinity();
  std::vector<double> w(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    const Line& line = lines[r + 1];
    if (line.tokens.size() != n) {
      throw GraphParseError("row has " + std::to_string(line.tokens.size()) + " entries, expected " +
                                std::to_string(n),
                            line.number);
    }
    for (std::size_t c = 0; c < n; ++c) {
      const std::string& tok = line.tokens[c];
      w[r * n + c] = (tok == "inf" || tok == "-") ? absent : to_real(tok, line.number);
    }
  }
  bool symmetric = true;
  for (std::size_t r = 0; r < n && symmetric; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) {
      const double a = w[r * n + c], b = w[c * n + r];
      if (!(a == b)) {
        symmetric = false;
        break;
      }
    }
  }
  Graph g(n, 0, 0, 0, !symmetric);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (r != c && std::isfinite(w[r * n + c]) && (!symmetric || r < c)) g.add_edge(r, c, w[r * n + c]);
    }
  }
  return g;
}

}  // namespace

GraphFormat parse_format(const std::string& name) {
  if (name == "edge-list" || name == "edgelist") return GraphFormat::kEdgeList;
  if (name == "dense-matrix" || name == "dense") return GraphFormat::kDenseMatrix;
  throw std::invalid_argument("unknown graph format '" + name + "' (expected edge-list or dense-matrix)");
}

GraphParseError::GraphParseError(const std::string& message, std::size_t line)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

Graph read_graph(std::istream& in, GraphFormat format) {
  const auto lines = tokenize(in);
  Graph g = format == GraphFormat::kEdgeList ? read_edge_list(lines) : read_dense(lines);
  g.validate();
  return g;
}

Graph load_graph(const std::filesystem::path& path, GraphFormat format) {
  std::ifstream in(path);
  if (!in) throw GraphParseError("cannot open " + path.string(), 0);
  return read_graph(in, format);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << std::setprecision(17);
  out << g.n() << " " << g.node_dim() << " " << g.edge_dim() << " " << g.graph_dim() << "\n";
  if (g.graph_dim() > 0) {
    out << "g";
    for (double v : g.graph_feats().values()) out << " " << v;
    out << "\n";
  }
  if (g.node_dim() > 0) {
    for (std::size_t v = 0; v < g.n(); ++v) {
      out << v;
      for (double f : g.node_features(v)) out << " " << f;
      out << "\n";
    }
  }
  for (std::size_t u = 0; u < g.n(); ++u) {
    for (std::size_t v = g.directed() ? 0 : u + 1; v < g.n(); ++v) {
      if (!g.has_edge(u, v)) continue;
      out << u << " " << v << " " << g.weight(u, v);
      for (double f : g.edge_features(u, v)) out << " " << f;
      out << "\n";
    }
  }
}

}  // namespace floydnet::graph
