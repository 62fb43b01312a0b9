#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "floydnet/graph/graph.hpp"
#include "floydnet/model/model.hpp"

namespace floydnet::wl {

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One refinement round as the sorted list of distinct signatures with their
// multiplicities. Signatures are written in the previous round's ids, which
// are ranks of the previous round's sorted signatures, so two graphs whose
// histories agree up to a round also agree on what every id means.
struct RoundSummary {
  std::vector<std::pair<std::vector<std::int64_t>, std::size_t>> classes;
  friend bool operator==(const RoundSummary&, const RoundSummary&) = default;
};

struct ColorPartition {
  std::size_t order = 1;
  std::size_t n = 0;
  std::vector<std::size_t> colors;        // per tuple, dense 0..C-1
  std::size_t rounds = 0;                 // refinement rounds run after the initial coloring
  std::vector<std::size_t> class_counts;  // distinct colors after round 0, 1, ..
  std::vector<RoundSummary> history;      // round 0 (atomic types) .. final non-splitting round

  std::size_t num_colors() const { return class_counts.empty() ? 0 : class_counts.back(); }
};

struct GraphSignature {
  std::uint64_t digest = 0;
  std::vector<RoundSummary> history;

  friend bool operator==(const GraphSignature& a, const GraphSignature& b) {
    return a.digest == b.digest && a.history == b.history;
  }
};

constexpr std::size_t kMaxTuples = std::size_t{1} << 16;

// Node color refinement. Initial colors from node features; each round hashes
// (color, multiset of (out-neighbor color, weight), multiset of in-neighbors).
ColorPartition wl1_refine(const graph::Graph& g);

// Folklore refinement over k-tuples: C'(e) = (C(e), {{ (C(e[0]<-p), .., C(e[k-1]<-p)) : p }}).
// Initial colors are the ordered atomic type of the tuple. Throws
// CapabilityError for k outside 1..3 or more than kMaxTuples tuples.
ColorPartition kfwl_refine(const graph::Graph& g, std::size_t k);

// Oblivious variant: C'(e) = (C(e), {{C(e[0]<-p)}}, .., {{C(e[k-1]<-p)}}).
ColorPartition kwl_refine(const graph::Graph& g, std::size_t k);

GraphSignature signature(const ColorPartition& p);

// Runs the model forward, rounds every entry of R^(L) to `decimals` places and
// summarizes the multiset of per-tuple rounded vectors.
GraphSignature model_signature(const graph::Graph& g, const model::ModelConfig& cfg, const model::ModelParams& params,
                               int decimals = 6);

enum class Scheme { kWl1, kFwl2, kFwl3, kWl2, kWl3, kModel2, kModel3 };
const char* scheme_name(Scheme s);

struct PairVerdict {
  Scheme scheme;
  bool distinguished = false;
  std::size_t rounds_used = 0;
  std::optional<std::uint64_t> seed;
};

PairVerdict run_oracle(Scheme scheme, const graph::Graph& a, const graph::Graph& b);

struct PairCase {
  std::string id;
  graph::Graph a;
  graph::Graph b;
  bool isomorphic = false;  // control pair: b is a relabeled copy of a
  bool wl1 = false;         // frozen expected verdicts
  bool fwl2 = false;
  bool fwl3 = false;
};

// Curated pairs: 1-WL-hard but 2-FWL-easy, 2-FWL-hard but 3-FWL-easy, one
// 1-WL-easy pair and isomorphic controls.
std::vector<PairCase> pair_suite();

// Configuration used for model verdicts: no features, supernode off, the
// whole final tensor is hashed.
model::ModelConfig expressivity_config(std::size_t order, std::uint64_t seed);
PairVerdict run_model(std::size_t order, std::uint64_t seed, const graph::Graph& a, const graph::Graph& b,
                      int decimals = 6);

// {"pair_id", "scheme", "distinguished", "rounds", "seed"}
std::string verdict_json(const std::string& pair_id, const PairVerdict& v);

}  // namespace floydnet::wl
