#include "floydnet/model/model.hpp"

#include "floydnet/nn/checkpoint.hpp"

namespace floydnet::model {

using nn::Shape;
using nn::ShapeError;

void BlockParams::collect(nn::ParamRefs& out) {
  norm1.collect(out);
  std::visit([&](auto& a) { a.collect(out); }, attention);
  norm2.collect(out);
  ffn.collect(out);
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
  cfg.validate();
  nn::Rng rng(cfg.seed);
  ModelParams p;
  std::size_t in = cfg.init_input_dim();
  const auto hidden = cfg.init_hidden_dims();
  for (std::size_t i = 0; i <= hidden.size(); ++i) {
    const std::size_t out = i < hidden.size() ? hidden[i] : cfg.rel_dim;
    p.init_mlp.push_back(nn::Linear::init("init." + std::to_string(i), in, out, true, rng));
    in = out;
  }
  if (cfg.supernode) {
    std::normal_distribution<double> gauss;
    p.sn_node = nn::Parameter("sn.node", Tensor({1, cfg.node_dim}));
    for (double& v : p.sn_node.value.values()) v = gauss(rng);
    p.sn_edge = nn::Parameter("sn.edge", Tensor({1, cfg.edge_segment_dim()}));
    for (double& v : p.sn_edge.value.values()) v = gauss(rng);
  }
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string name = "block" + std::to_string(l);
    BlockParams b{nn::Norm::init(name + ".norm1", cfg.rel_dim), attention::AttentionParams{},
                  nn::Norm::init(name + ".norm2", cfg.rel_dim), nn::FeedForward{}};
    if (cfg.order == 2) {
      b.attention = attention::AttentionParams::init(name + ".attn", cfg.rel_dim, cfg.heads, rng);
    } else {
      b.attention = attention::KOrderAttentionParams::init(name + ".attn", cfg.order, cfg.rel_dim, cfg.heads, rng);
    }
    b.ffn = nn::FeedForward::init(name + ".ffn", cfg.rel_dim, cfg.ffn_hidden_dim(), rng);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = nn::Norm::init("final_norm", cfg.rel_dim);
  p.decoder = nn::Linear::init("decoder", cfg.rel_dim, cfg.out_dim, true, rng);
  return p;
}

nn::ParamRefs ModelParams::collect() {
  nn::ParamRefs out;
  for (auto& l : init_mlp) l.collect(out);
  if (!sn_edge.name.empty()) {
    out.push_back(&sn_node);
    out.push_back(&sn_edge);
  }
  for (auto& b : blocks) b.collect(out);
  final_norm.collect(out);
  decoder.collect(out);
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.rel_dim;
  std::size_t total = 0;
  std::size_t in = cfg.init_input_dim();
  for (std::size_t h : cfg.init_hidden_dims()) {
    total += in * h + h;
    in = h;
  }
  total += in * d + d;
  if (cfg.supernode) total += cfg.node_dim + cfg.edge_segment_dim();
  const std::size_t f = cfg.ffn_hidden_dim();
  const std::size_t per_layer = 4 * d + (2 + 2 * cfg.order) * d * d + 2 * d + (d * f + f + f * d + d);
  total += cfg.layers * per_layer;
  total += 2 * d + d * cfg.out_dim + cfg.out_dim;
  return total;
}

std::size_t activation_size(const ModelConfig& cfg, std::size_t n) {
  const std::size_t np = n + (cfg.supernode ? 1 : 0);
  std::size_t t = 1;
  for (std::size_t a = 0; a < cfg.order; ++a) t *= np;
  return t * cfg.rel_dim;
}

void save_model(const std::filesystem::path& path, ModelParams& params) { nn::save_checkpoint(path, params.collect()); }
void load_model(const std::filesystem::path& path, ModelParams& params) { nn::load_checkpoint(path, params.collect()); }

namespace {

void check_dims(const graph::Graph& g, const ModelConfig& cfg) {
  if (g.node_dim() != cfg.node_dim || g.edge_dim() != cfg.edge_dim || g.graph_dim() != cfg.graph_dim) {
    throw ShapeError("graph feature dims (node " + std::to_string(g.node_dim()) + ", edge " +
                     std::to_string(g.edge_dim()) + ", graph " + std::to_string(g.graph_dim()) +
                     ") do not match the model config (" + std::to_string(cfg.node_dim) + ", " +
                     std::to_string(cfg.edge_dim) + ", " + std::to_string(cfg.graph_dim) + ")");
  }
}

std::size_t power(std::size_t base, std::size_t e) {
  std::size_t out = 1;
  while (e--) out *= base;
  return out;
}

}  // namespace

std::size_t augmented_size(const graph::Graph& g, const ModelConfig& cfg) { return g.n() + (cfg.supernode ? 1 : 0); }

graph::Graph attach_supernode(const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params) {
  if (!cfg.supernode) return g;
  const std::size_t n = g.n();
  graph::Graph out(n + 1, g.node_dim(), g.edge_dim(), g.graph_dim(), g.directed());
  for (std::size_t u = 0; u < n; ++u) {
    out.set_node_features(u, g.node_features(u));
    for (std::size_t v = 0; v < n; ++v) {
      if (g.has_edge(u, v)) out.add_edge(u, v, g.weight(u, v), g.edge_features(u, v), u == v);
    }
  }
  out.set_node_features(n, params.sn_node.value.values());
  out.set_graph_features(g.graph_feats().values());
  return out;
}

Var init_features(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                  std::size_t order) {
  check_dims(g, cfg);
  if (order < 1 || order > 3) throw attention::CapabilityError("order must be 1, 2 or 3");
  const std::size_t n = g.n();
  const std::size_t np = augmented_size(g, cfg);
  const std::size_t tuples = power(np, order);
  const std::size_t seg = cfg.edge_segment_dim();

  auto tuple_coord = [&](std::size_t e, std::size_t a) { return (e / power(np, order - 1 - a)) % np; };

  std::vector<Var> parts;
  if (cfg.graph_dim > 0) {
    const Var gt = tape.constant(g.graph_feats().reshaped({1, cfg.graph_dim}));
    parts.push_back(nn::gather_rows(tape, gt, std::vector<std::size_t>(tuples, 0), {tuples, cfg.graph_dim}));
  }
  if (cfg.node_dim > 0) {
    Var nodes = tape.constant(g.node_feats());
    if (cfg.supernode) nodes = nn::concat_rows(tape, {nodes, tape.parameter(params.sn_node)});
    for (std::size_t a = 0; a < order; ++a) {
      std::vector<std::size_t> idx(tuples);
      for (std::size_t e = 0; e < tuples; ++e) idx[e] = tuple_coord(e, a);
      parts.push_back(nn::gather_rows(tape, nodes, std::move(idx), {tuples, cfg.node_dim}));
    }
  }
  if (order >= 2) {
    // rows 0..n*n-1 graph pairs, n*n the SN self pair, n*n+1 the learnable SN link
    Tensor table({n * n + 1, seg});
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = 0; v < n; ++v) {
        double* row = table.data() + (u * n + v) * seg;
        const bool present = g.has_edge(u, v);
        row[0] = present ? 1.0 : 0.0;
        row[1] = u == v ? 1.0 : 0.0;
        row[2] = present ? g.weight(u, v) : 0.0;
        if (present) {
          const auto f = g.edge_features(u, v);
          std::copy(f.begin(), f.end(), row + 3);
        }
      }
    table[n * n * seg + 1] = 1.0;
    Var edges = tape.constant(std::move(table));
    if (cfg.supernode) edges = nn::concat_rows(tape, {edges, tape.parameter(params.sn_edge)});
    auto pair_row = [&](std::size_t u, std::size_t v) {
      if (u < n && v < n) return u * n + v;
      return u == v ? n * n : n * n + 1;
    };
    for (std::size_t a = 0; a < order; ++a)
      for (std::size_t b = a + 1; b < order; ++b) {
        std::vector<std::size_t> idx(tuples);
        for (std::size_t e = 0; e < tuples; ++e) idx[e] = pair_row(tuple_coord(e, a), tuple_coord(e, b));
        parts.push_back(nn::gather_rows(tape, edges, std::move(idx), {tuples, seg}));
      }
  }
  const Var flat = parts.size() == 1 ? parts[0] : nn::concat_last(tape, parts);
  Shape shape(order, np);
  shape.push_back(cfg.init_input_dim());
  return nn::reshape(tape, flat, std::move(shape));
}

Var init_mlp(Tape& tape, Var features, const ModelParams& params) {
  Var x = features;
  for (std::size_t i = 0; i < params.init_mlp.size(); ++i) {
    if (i > 0) x = nn::gelu(tape, x);
    x = nn::linear(tape, x, params.init_mlp[i]);
  }
  return x;
}

Var init_korder(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                std::size_t order) {
  return init_mlp(tape, init_features(tape, g, cfg, params, order), params);
}

Var init_relationship(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params) {
  return init_korder(tape, g, cfg, params, 2);
}

Var attention_forward(Tape& tape, Var r, const LayerAttention& attn, const ModelConfig& cfg) {
  if (const auto* p = std::get_if<attention::AttentionParams>(&attn)) {
    return cfg.kernel == KernelKind::kStreamed ? attention::pivotal_attention_streamed(tape, r, *p, cfg.combine)
                                               : attention::pivotal_attention_naive(tape, r, *p, cfg.combine);
  }
  return attention::korder_pivotal_attention(tape, r, std::get<attention::KOrderAttentionParams>(attn), cfg.combine);
}

Var floyd_block(Tape& tape, Var r, const BlockParams& block, const ModelConfig& cfg) {
  const Var a = attention_forward(tape, nn::layer_norm(tape, r, block.norm1), block.attention, cfg);
  const Var mid = nn::add(tape, r, a);
  return nn::add(tape, mid, nn::ffn(tape, nn::layer_norm(tape, mid, block.norm2), block.ffn));
}

Var model_forward(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params) {
  if (params.blocks.size() != cfg.layers) throw ShapeError("parameter set does not match configured layer count");
  Var r = init_korder(tape, g, cfg, params, cfg.order);
  for (const auto& block : params.blocks) r = floyd_block(tape, r, block, cfg);
  return nn::layer_norm(tape, r, params.final_norm);
}

std::vector<std::size_t> readout_tuples(std::size_t n, const ModelConfig& cfg, ReadoutLevel level) {
  const std::size_t k = cfg.order;
  const std::size_t np = n + (cfg.supernode ? 1 : 0);
  const std::size_t sn = n;
  auto flat = [&](std::vector<std::size_t> coords) {
    std::size_t e = 0;
    for (std::size_t c : coords) e = e * np + c;
    return e;
  };
  std::vector<std::size_t> out;
  switch (level) {
    case ReadoutLevel::kGraph:
      if (!cfg.supernode) throw attention::CapabilityError("graph readout needs the supernode");
      out.push_back(flat(std::vector<std::size_t>(k, sn)));
      break;
    case ReadoutLevel::kNode:
      if (!cfg.supernode) throw attention::CapabilityError("node readout needs the supernode");
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> c(k, sn);
        c[0] = i;
        out.push_back(flat(c));
      }
      break;
    case ReadoutLevel::kEdge:
      if (k < 2) throw attention::CapabilityError("edge readout needs order >= 2");
      if (k > 2 && !cfg.supernode) throw attention::CapabilityError("order-3 edge readout needs the supernode");
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          std::vector<std::size_t> c(k, sn);
          c[0] = i;
          c[1] = j;
          out.push_back(flat(c));
        }
      break;
  }
  return out;
}

Var readout(Tape& tape, Var r, std::size_t n, const ModelConfig& cfg, ReadoutLevel level, const nn::Linear& decoder) {
  const std::size_t d = tape.value(r).last_dim();
  auto idx = readout_tuples(n, cfg, level);
  const std::size_t m = idx.size();
  const Var rows = nn::gather_rows(tape, r, std::move(idx), {m, d});
  const Var out = nn::linear(tape, rows, decoder);
  if (level == ReadoutLevel::kEdge) return nn::reshape(tape, out, {n, n, decoder.out_dim()});
  return out;
}

Tensor predict(const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params) {
  Tape tape;
  tape.set_recording(false);
  const Var r = model_forward(tape, g, cfg, params);
  return tape.value(readout(tape, r, g.n(), cfg, cfg.readout, params.decoder));
}

Tensor permute_tuples(const Tensor& r, const graph::NodePermutation& pi, std::size_t order) {
  if (r.rank() != order + 1) throw ShapeError("permute_tuples: rank does not match order");
  const std::size_t np = r.dim(0);
  const std::size_t d = r.last_dim();
  const std::size_t tuples = r.rows();
  Tensor out(r.shape());
  for (std::size_t e = 0; e < tuples; ++e) {
    std::size_t rest = e, target = 0, stride = 1;
    for (std::size_t a = 0; a < order; ++a) {
      const std::size_t c = rest % np;
      rest /= np;
      target += (c < pi.size() ? pi(c) : c) * stride;
      stride *= np;
    }
    std::copy_n(r.data() + e * d, d, out.data() + target * d);
  }
  return out;
}

}  // namespace floydnet::model
