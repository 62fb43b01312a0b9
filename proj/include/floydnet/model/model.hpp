#pragma once

#include <filesystem>
#include <variant>
#include <vector>

#include "floydnet/attention/korder.hpp"
#include "floydnet/graph/graph.hpp"
#include "floydnet/model/config.hpp"

namespace floydnet::model {

using nn::Tape;
using nn::Tensor;
using nn::Var;

using LayerAttention = std::variant<attention::AttentionParams, attention::KOrderAttentionParams>;

struct BlockParams {
  nn::Norm norm1;
  LayerAttention attention;
  nn::Norm norm2;
  nn::FeedForward ffn;

  void collect(nn::ParamRefs& out);
};

struct ModelParams {
  std::vector<nn::Linear> init_mlp;  // GELU between consecutive layers
  nn::Parameter sn_node;             // [1, node_dim]
  nn::Parameter sn_edge;             // [1, edge_segment_dim]
  std::vector<BlockParams> blocks;
  nn::Norm final_norm;
  nn::Linear decoder;

  // Deterministic in cfg.seed.
  static ModelParams init(const ModelConfig& cfg);
  nn::ParamRefs collect();
};

// Closed form over the config; equals the element count of collect().
std::size_t parameter_count(const ModelConfig& cfg);
// Elements of one relationship tensor, (N + supernode)^k * d_r.
std::size_t activation_size(const ModelConfig& cfg, std::size_t n);

void save_model(const std::filesystem::path& path, ModelParams& params);
void load_model(const std::filesystem::path& path, ModelParams& params);

// Appends the SuperNode as node N. Its node features are the current SN
// embedding; the leading N x N block keeps the input adjacency. SN pairs carry
// no graph edge: the model encodes them with the learnable sn_edge segment.
graph::Graph attach_supernode(const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params);

// Tuple width used by the model: n plus one when the SuperNode is enabled.
std::size_t augmented_size(const graph::Graph& g, const ModelConfig& cfg);

// Concatenated initial encoding [G, X_{e_1}, .., X_{e_k}, E_{e_a e_b} for a < b]
// of every k-tuple over the augmented node set, shape [N']*k + [width].
// Pairwise segments are [present, diagonal, weight * present, edge feats].
Var init_features(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                  std::size_t order);
Var init_mlp(Tape& tape, Var features, const ModelParams& params);
// MLP over the order-k encoding; init_relationship is the k = 2 case.
Var init_korder(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params,
                std::size_t order);
Var init_relationship(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params);

// r + Attn(Norm(r)), then + FFN(Norm(.)).
Var floyd_block(Tape& tape, Var r, const BlockParams& block, const ModelConfig& cfg);
Var attention_forward(Tape& tape, Var r, const LayerAttention& attn, const ModelConfig& cfg);

// Final normalized R^(L), shape [N']*k + [d_r].
Var model_forward(Tape& tape, const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params);

// Tuple rows selected for a readout level; n is the real node count.
// graph: (SN, .., SN); node: (i, SN, .., SN); edge: (i, j, SN, ..) or (i, j).
std::vector<std::size_t> readout_tuples(std::size_t n, const ModelConfig& cfg, ReadoutLevel level);
// Decoded predictions: graph [1, out], node [n, out], edge [n, n, out].
Var readout(Tape& tape, Var r, std::size_t n, const ModelConfig& cfg, ReadoutLevel level, const nn::Linear& decoder);

// Convenience: forward + configured readout with no gradient recording.
Tensor predict(const graph::Graph& g, const ModelConfig& cfg, const ModelParams& params);

// Relabels every node axis of a [n]*k + [d] tensor; node v moves to pi(v).
// Axis entries >= pi.size() (the SuperNode) stay in place.
Tensor permute_tuples(const Tensor& r, const graph::NodePermutation& pi, std::size_t order);

}  // namespace floydnet::model
