#include "floydnet/wl/wl.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "floydnet/graph/generators.hpp"

namespace floydnet::wl {

using Sig = std::vector<std::int64_t>;

namespace {

std::int64_t bits(double v) {
  if (v == 0.0) v = 0.0;
  return std::bit_cast<std::int64_t>(v);
}

void append_bits(Sig& s, std::span<const double> values) {
  for (double v : values) s.push_back(bits(v));
}

// Dense ids by rank of the sorted distinct signatures.
std::vector<std::size_t> assign(const std::vector<Sig>& sigs, RoundSummary& summary) {
  std::vector<std::size_t> order(sigs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigs[a] < sigs[b]; });
  std::vector<std::size_t> ids(sigs.size());
  summary.classes.clear();
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Sig& s = sigs[order[r]];
    if (summary.classes.empty() || summary.classes.back().first != s) summary.classes.emplace_back(s, 0);
    ++summary.classes.back().second;
    ids[order[r]] = summary.classes.size() - 1;
  }
  return ids;
}

ColorPartition refine(std::size_t n, std::size_t order, std::size_t tuples, const std::vector<Sig>& initial,
                      const std::function<std::vector<Sig>(const std::vector<std::size_t>&)>& step) {
  ColorPartition p;
  p.order = order;
  p.n = n;
  RoundSummary summary;
  p.colors = assign(initial, summary);
  p.history.push_back(summary);
  p.class_counts.push_back(summary.classes.size());
  // each splitting round adds a class, so at most tuples - 1 of them
  for (std::size_t round = 1; round <= tuples; ++round) {
    p.colors = assign(step(p.colors), summary);
    p.history.push_back(summary);
    p.class_counts.push_back(summary.classes.size());
    p.rounds = round;
    if (p.class_counts.back() == p.class_counts[p.class_counts.size() - 2]) break;
  }
  return p;
}

std::size_t tuple_count(std::size_t n, std::size_t k) {
  std::size_t t = 1;
  for (std::size_t a = 0; a < k; ++a) {
    t *= n;
    if (t > kMaxTuples) throw CapabilityError("refinement over " + std::to_string(k) + "-tuples of " + std::to_string(n) + " nodes exceeds the tuple budget");
  }
  return t;
}

struct Tuples {
  std::size_t n, k, count;
  std::vector<std::size_t> strides;

  Tuples(std::size_t n_, std::size_t k_) : n(n_), k(k_), count(tuple_count(n_, k_)), strides(k_) {
    std::size_t s = 1;
    for (std::size_t a = k; a-- > 0;) {
      strides[a] = s;
      s *= n;
    }
  }
  std::size_t coord(std::size_t e, std::size_t a) const { return (e / strides[a]) % n; }
  std::size_t substitute(std::size_t e, std::size_t a, std::size_t p) const {
    return e - coord(e, a) * strides[a] + p * strides[a];
  }
};

std::vector<Sig> atomic_types(const graph::Graph& g, const Tuples& t) {
  std::vector<Sig> out(t.count);
  for (std::size_t e = 0; e < t.count; ++e) {
    Sig& s = out[e];
    append_bits(s, g.graph_feats().values());
    for (std::size_t a = 0; a < t.k; ++a) append_bits(s, g.node_features(t.coord(e, a)));
    for (std::size_t a = 0; a < t.k; ++a)
      for (std::size_t b = 0; b < t.k; ++b) {
        const std::size_t u = t.coord(e, a), v = t.coord(e, b);
        s.push_back(u == v);
        const bool adj = g.has_edge(u, v);
        s.push_back(adj);
        if (adj) {
          s.push_back(bits(g.weight(u, v)));
          append_bits(s, g.edge_features(u, v));
        }
      }
  }
  return out;
}

void check_order(std::size_t k) {
  if (k < 1 || k > 3) throw CapabilityError("refinement order must be 1, 2 or 3");
}

}  // namespace

ColorPartition wl1_refine(const graph::Graph& g) {
  const std::size_t n = g.n();
  std::vector<Sig> init(n);
  for (std::size_t v = 0; v < n; ++v) {
    append_bits(init[v], g.graph_feats().values());
    append_bits(init[v], g.node_features(v));
    init[v].push_back(g.has_edge(v, v));
  }
  auto step = [&](const std::vector<std::size_t>& c) {
    std::vector<Sig> sigs(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::array<std::int64_t, 2>> out_nb, in_nb;
      for (std::size_t u = 0; u < n; ++u) {
        if (g.has_edge(v, u)) out_nb.push_back({static_cast<std::int64_t>(c[u]), bits(g.weight(v, u))});
        if (g.directed() && g.has_edge(u, v)) in_nb.push_back({static_cast<std::int64_t>(c[u]), bits(g.weight(u, v))});
      }
      std::sort(out_nb.begin(), out_nb.end());
      std::sort(in_nb.begin(), in_nb.end());
      Sig& s = sigs[v];
      s.push_back(static_cast<std::int64_t>(c[v]));
      s.push_back(static_cast<std::int64_t>(out_nb.size()));
      for (const auto& x : out_nb) s.insert(s.end(), x.begin(), x.end());
      s.push_back(static_cast<std::int64_t>(in_nb.size()));
      for (const auto& x : in_nb) s.insert(s.end(), x.begin(), x.end());
    }
    return sigs;
  };
  return refine(n, 1, n, init, step);
}

ColorPartition kfwl_refine(const graph::Graph& g, std::size_t k) {
  check_order(k);
  const Tuples t(g.n(), k);
  auto step = [&](const std::vector<std::size_t>& c) {
    std::vector<Sig> sigs(t.count);
    std::vector<std::array<std::int64_t, 3>> nb(t.n);
    for (std::size_t e = 0; e < t.count; ++e) {
      for (std::size_t p = 0; p < t.n; ++p) {
        nb[p] = {-1, -1, -1};
        for (std::size_t a = 0; a < k; ++a) nb[p][a] = static_cast<std::int64_t>(c[t.substitute(e, a, p)]);
      }
      std::sort(nb.begin(), nb.end());
      Sig& s = sigs[e];
      s.reserve(1 + t.n * k);
      s.push_back(static_cast<std::int64_t>(c[e]));
      for (const auto& x : nb) s.insert(s.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return sigs;
  };
  return refine(t.n, k, t.count, atomic_types(g, t), step);
}

ColorPartition kwl_refine(const graph::Graph& g, std::size_t k) {
  check_order(k);
  const Tuples t(g.n(), k);
  auto step = [&](const std::vector<std::size_t>& c) {
    std::vector<Sig> sigs(t.count);
    std::vector<std::int64_t> nb(t.n);
    for (std::size_t e = 0; e < t.count; ++e) {
      Sig& s = sigs[e];
      s.push_back(static_cast<std::int64_t>(c[e]));
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t p = 0; p < t.n; ++p) nb[p] = static_cast<std::int64_t>(c[t.substitute(e, a, p)]);
        std::sort(nb.begin(), nb.end());
        s.insert(s.end(), nb.begin(), nb.end());
      }
    }
    return sigs;
  };
  return refine(t.n, k, t.count, atomic_types(g, t), step);
}

namespace {

std::uint64_t fnv1a(const std::vector<RoundSummary>& history) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(history.size());
  for (const auto& round : history) {
    mix(round.classes.size());
    for (const auto& [sig, count] : round.classes) {
      mix(sig.size());
      for (std::int64_t v : sig) mix(static_cast<std::uint64_t>(v));
      mix(count);
    }
  }
  return h;
}

}  // namespace

GraphSignature signature(const ColorPartition& p) { return {fnv1a(p.history), p.history}; }

GraphSignature model_signature(const graph::Graph& g, const model::ModelConfig& cfg, const model::ModelParams& params,
                               int decimals) {
  nn::Tape tape;
  tape.set_recording(false);
  const nn::Tensor& r = tape.value(model::model_forward(tape, g, cfg, params));
  const double scale = std::pow(10.0, decimals);
  const std::size_t d = r.last_dim();
  std::vector<Sig> rows(r.rows(), Sig(d));
  for (std::size_t e = 0; e < r.rows(); ++e)
    for (std::size_t c = 0; c < d; ++c) rows[e][c] = static_cast<std::int64_t>(std::llround(r[e * d + c] * scale));
  RoundSummary summary;
  assign(rows, summary);
  std::vector<RoundSummary> history{std::move(summary)};
  return {fnv1a(history), std::move(history)};
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kWl1: return "1-WL";
    case Scheme::kFwl2: return "2-FWL";
    case Scheme::kFwl3: return "3-FWL";
    case Scheme::kWl2: return "2-WL";
    case Scheme::kWl3: return "3-WL";
    case Scheme::kModel2: return "model-2";
    case Scheme::kModel3: return "model-3";
  }
  return "?";
}

namespace {

PairVerdict compare(Scheme scheme, const ColorPartition& a, const ColorPartition& b) {
  const auto sa = signature(a), sb = signature(b);
  PairVerdict v{scheme, !(sa == sb), std::max(a.rounds, b.rounds), std::nullopt};
  if (v.distinguished) {
    std::size_t r = 0;
    while (r < sa.history.size() && r < sb.history.size() && sa.history[r] == sb.history[r]) ++r;
    v.rounds_used = r;
  }
  return v;
}

}  // namespace

PairVerdict run_oracle(Scheme scheme, const graph::Graph& a, const graph::Graph& b) {
  switch (scheme) {
    case Scheme::kWl1: return compare(scheme, wl1_refine(a), wl1_refine(b));
    case Scheme::kFwl2: return compare(scheme, kfwl_refine(a, 2), kfwl_refine(b, 2));
    case Scheme::kFwl3: return compare(scheme, kfwl_refine(a, 3), kfwl_refine(b, 3));
    case Scheme::kWl2: return compare(scheme, kwl_refine(a, 2), kwl_refine(b, 2));
    case Scheme::kWl3: return compare(scheme, kwl_refine(a, 3), kwl_refine(b, 3));
    default: throw std::invalid_argument("run_oracle: model schemes go through run_model");
  }
}

model::ModelConfig expressivity_config(std::size_t order, std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.order = order;
  cfg.layers = 4;
  cfg.rel_dim = 16;
  cfg.heads = 2;
  cfg.combine = attention::CombineKind::kAdditive;
  cfg.supernode = false;
  cfg.readout = model::ReadoutLevel::kEdge;
  cfg.seed = seed;
  return cfg;
}

PairVerdict run_model(std::size_t order, std::uint64_t seed, const graph::Graph& a, const graph::Graph& b,
                      int decimals) {
  const auto cfg = expressivity_config(order, seed);
  const auto params = model::ModelParams::init(cfg);
  const bool differ = !(model_signature(a, cfg, params, decimals) == model_signature(b, cfg, params, decimals));
  return {order == 2 ? Scheme::kModel2 : Scheme::kModel3, differ, cfg.layers, seed};
}

std::vector<PairCase> pair_suite() {
  using namespace graph;
  std::vector<PairCase> s;
  auto add = [&](std::string id, Graph a, Graph b, bool iso, bool wl1, bool fwl2, bool fwl3) {
    s.push_back({std::move(id), std::move(a), std::move(b), iso, wl1, fwl2, fwl3});
  };
  add("c6_vs_2c3", cycle_graph(6), disjoint_union(cycle_graph(3), cycle_graph(3)), false, false, true, true);
  add("c8_vs_2c4", cycle_graph(8), disjoint_union(cycle_graph(4), cycle_graph(4)), false, false, true, true);
  add("decalin_vs_bicyclopentyl", decalin_graph(), bicyclopentyl_graph(), false, false, true, true);
  add("csl11_2_vs_3", circulant_graph(11, {1, 2}), circulant_graph(11, {1, 3}), false, false, true, true);
  add("csl10_2_vs_3", circulant_graph(10, {1, 2}), circulant_graph(10, {1, 3}), false, false, true, true);
  add("prism3_vs_k33", prism_graph(3), complete_bipartite(3, 3), false, false, true, true);
  add("shrikhande_vs_rook", shrikhande_graph(), rook_graph_4x4(), false, false, false, true);
  add("co_shrikhande_vs_co_rook", complement(shrikhande_graph()), complement(rook_graph_4x4()), false, false, false,
      true);
  add("star3_vs_path4", star_graph(3), path_graph(4), false, true, true, true);
  add("petersen_perm", petersen_graph(), apply_permutation(petersen_graph(), NodePermutation::random(10, 11)), true,
      false, false, false);
  const Graph rnd = gen_random_graph(10, 0.4, 1, 1, 7);
  add("random10_perm", rnd, apply_permutation(rnd, NodePermutation::random(10, 12)), true, false, false, false);
  add("rook_perm", rook_graph_4x4(), apply_permutation(rook_graph_4x4(), NodePermutation::random(16, 13)), true,
      false, false, false);
  return s;
}

std::string verdict_json(const std::string& pair_id, const PairVerdict& v) {
  nlohmann::ordered_json j;
  j["pair_id"] = pair_id;
  j["scheme"] = scheme_name(v.scheme);
  j["distinguished"] = v.distinguished;
  j["rounds"] = v.rounds_used;
  if (v.seed) j["seed"] = *v.seed;
  else j["seed"] = nullptr;
  return j.dump();
}

}  // namespace floydnet::wl
