#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "floydnet/nn/ops.hpp"

namespace floydnet::attention {

using nn::Tape;
using nn::Var;

enum class CombineKind { kAdditive, kMultiplicative };

CombineKind parse_combine(const std::string& name);
const char* combine_name(CombineKind kind);

inline double combine_values(double a, double b, CombineKind kind) {
  return kind == CombineKind::kAdditive ? a + b : a * b;
}

// Elementwise a + b or a * b.
Var combine(Tape& tape, Var a, Var b, CombineKind kind);

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Projections for one multi-head Pivotal Attention layer over an N x N x d
// relationship tensor. Left projections read the (i, j) segment of a path
// i -> j -> k, right projections read the (j, k) segment. Key and value
// projections carry no bias; query and output projections do.
struct AttentionParams {
  nn::Linear query;
  nn::Linear key_left;
  nn::Linear key_right;
  nn::Linear value_left;
  nn::Linear value_right;
  nn::Linear out;
  std::size_t heads = 1;

  std::size_t dim() const { return query.in_dim(); }
  std::size_t head_dim() const { return dim() / heads; }

  static AttentionParams init(const std::string& name, std::size_t dim, std::size_t heads, nn::Rng& rng);
  void collect(nn::ParamRefs& out_params);
  void validate() const;
};

// Reference implementation. Materializes the combined keys and values
// [N, N(j), N, d] and the scores/weights [N, N(j), N, h], then reduces over
// the pivot axis. Each step is an individually differentiable primitive.
Var pivotal_attention_naive(Tape& tape, Var r, const AttentionParams& p, CombineKind kind);

constexpr std::size_t kDefaultTile = 32;

// Streaming kernel: two sweeps over pivots per target pair (running max and
// normalizer, then weighted accumulation). Auxiliary storage is O(N^2 d);
// backward recomputes attention weights from the saved per-pair statistics.
Var pivotal_attention_streamed(Tape& tape, Var r, const AttentionParams& p, CombineKind kind,
                               std::size_t tile = kDefaultTile);

// The attention cores on pre-projected tensors, all [N, N, d].
Var pivot_core_naive(Tape& tape, Var q, Var key_left, Var key_right, Var value_left, Var value_right,
                     std::size_t heads, CombineKind kind);
Var pivot_core_streamed(Tape& tape, Var q, Var key_left, Var key_right, Var value_left, Var value_right,
                        std::size_t heads, CombineKind kind, std::size_t tile = kDefaultTile);

// Building blocks of the naive core.
// [i, j, k, c] = C(left[i, j, c], right[j, k, c])
Var pivot_pair_combine(Tape& tape, Var left, Var right, CombineKind kind);
// [i, j, k, h] = <q[i, k, head h], kc[i, j, k, head h]> / sqrt(d_h)
Var pivot_scores(Tape& tape, Var q, Var combined_keys, std::size_t heads);
// [i, k, c] = sum_j w[i, j, k, head(c)] * vc[i, j, k, c]
Var pivot_weighted_sum(Tape& tape, Var weights, Var combined_values);

}  // namespace floydnet::attention
