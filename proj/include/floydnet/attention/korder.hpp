#pragma once

#include <vector>

#include "floydnet/attention/pivotal.hpp"

namespace floydnet::attention {

// Pivotal Attention over k-tuples. Relationship tensors are [N]*k + [d].
// keys[a] / values[a] project the neighbor tuple obtained by substituting the
// pivot into position a of the target tuple; each position has its own set.
struct KOrderAttentionParams {
  std::size_t order = 2;
  nn::Linear query;
  std::vector<nn::Linear> keys;
  std::vector<nn::Linear> values;
  nn::Linear out;
  std::size_t heads = 1;

  std::size_t dim() const { return query.in_dim(); }

  static KOrderAttentionParams init(const std::string& name, std::size_t order, std::size_t dim, std::size_t heads,
                                    nn::Rng& rng);
  // The k = 2 view of pairwise parameters: substituting position 0 of (i, k)
  // yields (j, k), the right segment; position 1 yields (i, j), the left.
  static KOrderAttentionParams from_pivotal(const AttentionParams& p);
  void collect(nn::ParamRefs& out_params);
  void validate() const;
};

constexpr std::size_t kMaxKOrderElements = std::size_t{1} << 26;

// Enumerates every tuple e and pivot p, combines the k substituted-tuple
// projections, and attends over p. Throws CapabilityError when the
// [N^k, N, d] intermediates exceed kMaxKOrderElements or k is not 1..3.
Var korder_pivotal_attention(Tape& tape, Var r, const KOrderAttentionParams& p, CombineKind kind);

// [e..., p, c] = C over positions a of projected[a][e with e[a] = p][c]
Var tuple_combine(Tape& tape, const std::vector<Var>& projected, std::size_t order, CombineKind kind);
// [e..., p, h] = <q[e, head h], kc[e, p, head h]> / sqrt(d_h)
Var tuple_scores(Tape& tape, Var q, Var combined_keys, std::size_t order, std::size_t heads);
// [e..., c] = sum_p w[e, p, head(c)] * vc[e, p, c]
Var tuple_weighted_sum(Tape& tape, Var weights, Var combined_values, std::size_t order);

}  // namespace floydnet::attention
