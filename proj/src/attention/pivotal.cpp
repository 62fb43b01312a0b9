#include "floydnet/attention/pivotal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "floydnet/nn/parallel.hpp"

namespace floydnet::attention {

using nn::Shape;
using nn::ShapeError;
using nn::Tensor;

namespace {

// Returns N for a [N, N, d] tensor.
std::size_t pair_extent(const Tensor& t, const char* op) {
  if (t.rank() != 3 || t.dim(0) != t.dim(1)) {
    throw ShapeError(std::string(op) + ": expected [N, N, d], got " + nn::shape_string(t.shape()));
  }
  return t.dim(0);
}

void check_heads(std::size_t d, std::size_t heads, const char* op) {
  if (heads == 0 || d % heads != 0) {
    throw ShapeError(std::string(op) + ": d=" + std::to_string(d) + " not divisible by heads=" +
                     std::to_string(heads));
  }
}

}  // namespace

CombineKind parse_combine(const std::string& name) {
  if (name == "add" || name == "additive") return CombineKind::kAdditive;
  if (name == "mul" || name == "multiplicative") return CombineKind::kMultiplicative;
  throw std::invalid_argument("unknown combine kind '" + name + "'");
}

const char* combine_name(CombineKind kind) {
  return kind == CombineKind::kAdditive ? "additive" : "multiplicative";
}

Var combine(Tape& tape, Var a, Var b, CombineKind kind) {
  return kind == CombineKind::kAdditive ? nn::add(tape, a, b) : nn::mul(tape, a, b);
}

AttentionParams AttentionParams::init(const std::string& name, std::size_t dim, std::size_t heads, nn::Rng& rng) {
  AttentionParams p{nn::Linear::init(name + ".query", dim, dim, true, rng),
                    nn::Linear::init(name + ".key_left", dim, dim, false, rng),
                    nn::Linear::init(name + ".key_right", dim, dim, false, rng),
                    nn::Linear::init(name + ".value_left", dim, dim, false, rng),
                    nn::Linear::init(name + ".value_right", dim, dim, false, rng),
                    nn::Linear::init(name + ".out", dim, dim, true, rng),
                    heads};
  p.validate();
  return p;
}

void AttentionParams::collect(nn::ParamRefs& out_params) {
  query.collect(out_params);
  key_left.collect(out_params);
  key_right.collect(out_params);
  value_left.collect(out_params);
  value_right.collect(out_params);
  out.collect(out_params);
}

void AttentionParams::validate() const {
  const std::size_t d = dim();
  check_heads(d, heads, "AttentionParams");
  for (const nn::Linear* l : {&query, &key_left, &key_right, &value_left, &value_right}) {
    if (l->in_dim() != d || l->out_dim() != d) throw ShapeError("AttentionParams: projections must be d x d");
  }
  if (out.in_dim() != d) throw ShapeError("AttentionParams: output projection must read d channels");
}

Var pivot_pair_combine(Tape& tape, Var left, Var right, CombineKind kind) {
  const Tensor& lv = tape.value(left);
  const Tensor& rv = tape.value(right);
  const std::size_t n = pair_extent(lv, "pivot_pair_combine");
  if (lv.shape() != rv.shape()) throw ShapeError("pivot_pair_combine: left/right shapes differ");
  const std::size_t d = lv.dim(2);
  Tensor out({n, n, n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        const double* a = lv.data() + (i * n + j) * d;
        const double* b = rv.data() + (j * n + k) * d;
        double* o = out.data() + ((i * n + j) * n + k) * d;
        for (std::size_t c = 0; c < d; ++c) o[c] = combine_values(a[c], b[c], kind);
      }
  return tape.record(
      std::move(out), {left, right},
      [left, right, kind, n, d](Tape& t, Var, const Tensor& g) {
        const Tensor& lv = t.value(left);
        const Tensor& rv = t.value(right);
        const bool need_l = t.requires_grad(left);
        const bool need_r = t.requires_grad(right);
        Tensor* gl = need_l ? &t.grad_buffer(left) : nullptr;
        Tensor* gr = need_r ? &t.grad_buffer(right) : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
              const double* go = g.data() + ((i * n + j) * n + k) * d;
              const std::size_t ij = (i * n + j) * d;
              const std::size_t jk = (j * n + k) * d;
              for (std::size_t c = 0; c < d; ++c) {
                if (kind == CombineKind::kAdditive) {
                  if (gl) (*gl)[ij + c] += go[c];
                  if (gr) (*gr)[jk + c] += go[c];
                } else {
                  if (gl) (*gl)[ij + c] += go[c] * rv[jk + c];
                  if (gr) (*gr)[jk + c] += go[c] * lv[ij + c];
                }
              }
            }
      },
      "pivot_pair_combine");
}

Var pivot_scores(Tape& tape, Var q, Var combined_keys, std::size_t heads) {
  const Tensor& qv = tape.value(q);
  const Tensor& kv = tape.value(combined_keys);
  const std::size_t n = pair_extent(qv, "pivot_scores");
  const std::size_t d = qv.dim(2);
  check_heads(d, heads, "pivot_scores");
  if (kv.shape() != Shape{n, n, n, d}) throw ShapeError("pivot_scores: combined keys must be [N, N, N, d]");
  const std::size_t dh = d / heads;
  const double norm = std::sqrt(static_cast<double>(dh));
  Tensor out({n, n, n, heads});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t h = 0; h < heads; ++h) {
          const double* qa = qv.data() + (i * n + k) * d + h * dh;
          const double* ka = kv.data() + ((i * n + j) * n + k) * d + h * dh;
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += qa[c] * ka[c];
          out[((i * n + j) * n + k) * heads + h] = dot / norm;
        }
  return tape.record(
      std::move(out), {q, combined_keys},
      [q, combined_keys, n, d, heads, dh, norm](Tape& t, Var, const Tensor& g) {
        const Tensor& qv = t.value(q);
        const Tensor& kv = t.value(combined_keys);
        Tensor* gq = t.requires_grad(q) ? &t.grad_buffer(q) : nullptr;
        Tensor* gk = t.requires_grad(combined_keys) ? &t.grad_buffer(combined_keys) : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
              for (std::size_t h = 0; h < heads; ++h) {
                const double gs = g[((i * n + j) * n + k) * heads + h] / norm;
                const std::size_t qo = (i * n + k) * d + h * dh;
                const std::size_t ko = ((i * n + j) * n + k) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (gq) (*gq)[qo + c] += gs * kv[ko + c];
                  if (gk) (*gk)[ko + c] += gs * qv[qo + c];
                }
              }
      },
      "pivot_scores");
}

Var pivot_weighted_sum(Tape& tape, Var weights, Var combined_values) {
  const Tensor& wv = tape.value(weights);
  const Tensor& vv = tape.value(combined_values);
  if (wv.rank() != 4 || vv.rank() != 4) throw ShapeError("pivot_weighted_sum: expected rank-4 inputs");
  const std::size_t n = wv.dim(0);
  const std::size_t heads = wv.dim(3);
  const std::size_t d = vv.dim(3);
  check_heads(d, heads, "pivot_weighted_sum");
  if (vv.shape() != Shape{n, n, n, d} || wv.shape() != Shape{n, n, n, heads}) {
    throw ShapeError("pivot_weighted_sum: shape mismatch");
  }
  const std::size_t dh = d / heads;
  Tensor out({n, n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          acc += wv[((i * n + j) * n + k) * heads + c / dh] * vv[((i * n + j) * n + k) * d + c];
        }
        out[(i * n + k) * d + c] = acc;
      }
  return tape.record(
      std::move(out), {weights, combined_values},
      [weights, combined_values, n, d, heads, dh](Tape& t, Var, const Tensor& g) {
        const Tensor& wv = t.value(weights);
        const Tensor& vv = t.value(combined_values);
        Tensor* gw = t.requires_grad(weights) ? &t.grad_buffer(weights) : nullptr;
        Tensor* gv = t.requires_grad(combined_values) ? &t.grad_buffer(combined_values) : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
              for (std::size_t c = 0; c < d; ++c) {
                const double go = g[(i * n + k) * d + c];
                const std::size_t widx = ((i * n + j) * n + k) * heads + c / dh;
                const std::size_t vidx = ((i * n + j) * n + k) * d + c;
                if (gw) (*gw)[widx] += go * vv[vidx];
                if (gv) (*gv)[vidx] += go * wv[widx];
              }
      },
      "pivot_weighted_sum");
}

Var pivot_core_naive(Tape& tape, Var q, Var key_left, Var key_right, Var value_left, Var value_right,
                     std::size_t heads, CombineKind kind) {
  const Var keys = pivot_pair_combine(tape, key_left, key_right, kind);
  const Var vals = pivot_pair_combine(tape, value_left, value_right, kind);
  const Var scores = pivot_scores(tape, q, keys, heads);
  const Var weights = nn::softmax(tape, scores, 1);
  return pivot_weighted_sum(tape, weights, vals);
}

namespace {

struct StreamGeometry {
  std::size_t n, d, heads, dh;
  double norm;
};

// Score of pivot j for target (i, k) in head h, evaluated exactly as the
// naive path does: dot product over the head slice, then scaled.
inline double stream_score(const StreamGeometry& g, const double* q, const double* kl, const double* kr,
                           std::size_t i, std::size_t j, std::size_t k, std::size_t h, CombineKind kind) {
  const double* qa = q + (i * g.n + k) * g.d + h * g.dh;
  const double* a = kl + (i * g.n + j) * g.d + h * g.dh;
  const double* b = kr + (j * g.n + k) * g.d + h * g.dh;
  double dot = 0.0;
  for (std::size_t c = 0; c < g.dh; ++c) dot += qa[c] * combine_values(a[c], b[c], kind);
  return dot / g.norm;
}

}  // namespace

Var pivot_core_streamed(Tape& tape, Var q, Var key_left, Var key_right, Var value_left, Var value_right,
                        std::size_t heads, CombineKind kind, std::size_t tile) {
  const Tensor& qv = tape.value(q);
  const std::size_t n = pair_extent(qv, "pivot_core_streamed");
  const std::size_t d = qv.dim(2);
  check_heads(d, heads, "pivot_core_streamed");
  for (Var v : {key_left, key_right, value_left, value_right}) {
    if (tape.shape(v) != qv.shape()) throw ShapeError("pivot_core_streamed: projections must share shape");
  }
  if (tile == 0) tile = kDefaultTile;
  const StreamGeometry geo{n, d, heads, d / heads, std::sqrt(static_cast<double>(d / heads))};

  Tensor out({n, n, d});
  // Per (i, k, head) softmax statistics: running max and normalizer.
  Tensor row_max({n, n, heads});
  Tensor row_sum({n, n, heads});
  {
    const double* qp = qv.data();
    const double* klp = tape.value(key_left).data();
    const double* krp = tape.value(key_right).data();
    const double* vlp = tape.value(value_left).data();
    const double* vrp = tape.value(value_right).data();
    const std::size_t tiles_per_axis = (n + tile - 1) / tile;
    nn::parallel_for(tiles_per_axis * tiles_per_axis, [&](std::size_t t) {
      const std::size_t i0 = (t / tiles_per_axis) * tile;
      const std::size_t k0 = (t % tiles_per_axis) * tile;
      for (std::size_t i = i0; i < std::min(n, i0 + tile); ++i) {
        for (std::size_t k = k0; k < std::min(n, k0 + tile); ++k) {
          for (std::size_t h = 0; h < heads; ++h) {
            double m = -std::numeric_limits<double>::infinity();
            double l = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double s = stream_score(geo, qp, klp, krp, i, j, k, h, kind);
              if (s > m) {
                l = l * std::exp(m - s) + 1.0;
                m = s;
              } else {
                l += std::exp(s - m);
              }
            }
            row_max[(i * n + k) * heads + h] = m;
            row_sum[(i * n + k) * heads + h] = l;
            double* o = out.data() + (i * n + k) * d + h * geo.dh;
            for (std::size_t j = 0; j < n; ++j) {
              const double w = std::exp(stream_score(geo, qp, klp, krp, i, j, k, h, kind) - m) / l;
              const double* a = vlp + (i * n + j) * d + h * geo.dh;
              const double* b = vrp + (j * n + k) * d + h * geo.dh;
              for (std::size_t c = 0; c < geo.dh; ++c) o[c] += w * combine_values(a[c], b[c], kind);
            }
          }
        }
      }
    });
  }

  return tape.record(
      std::move(out), {q, key_left, key_right, value_left, value_right},
      [q, key_left, key_right, value_left, value_right, kind, geo, row_max = std::move(row_max),
       row_sum = std::move(row_sum)](Tape& t, Var self, const Tensor& g) {
        const std::size_t n = geo.n, d = geo.d, dh = geo.dh, heads = geo.heads;
        const double* qp = t.value(q).data();
        const double* klp = t.value(key_left).data();
        const double* krp = t.value(key_right).data();
        const double* vlp = t.value(value_left).data();
        const double* vrp = t.value(value_right).data();
        const Tensor& o = t.value(self);
        auto buffer = [&t](Var v) { return t.requires_grad(v) ? t.grad_buffer(v).data() : nullptr; };
        double* gq = buffer(q);
        double* gkl = buffer(key_left);
        double* gkr = buffer(key_right);
        double* gvl = buffer(value_left);
        double* gvr = buffer(value_right);
        const bool mul = kind == CombineKind::kMultiplicative;
        // Sequential sweep: scatter targets (i, j) and (j, k) overlap across
        // target pairs, and a fixed order keeps accumulation deterministic.
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t h = 0; h < heads; ++h) {
              const std::size_t ikh = (i * n + k) * heads + h;
              const std::size_t ik = (i * n + k) * d + h * dh;
              const double* go = g.data() + ik;
              double delta = 0.0;
              for (std::size_t c = 0; c < dh; ++c) delta += go[c] * o[ik + c];
              const double m = row_max[ikh];
              const double l = row_sum[ikh];
              for (std::size_t j = 0; j < n; ++j) {
                const std::size_t ij = (i * n + j) * d + h * dh;
                const std::size_t jk = (j * n + k) * d + h * dh;
                const double w = std::exp(stream_score(geo, qp, klp, krp, i, j, k, h, kind) - m) / l;
                double dw = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                  const double vc = combine_values(vlp[ij + c], vrp[jk + c], kind);
                  dw += go[c] * vc;
                  const double gvc = w * go[c];
                  if (gvl) gvl[ij + c] += mul ? gvc * vrp[jk + c] : gvc;
                  if (gvr) gvr[jk + c] += mul ? gvc * vlp[ij + c] : gvc;
                }
                const double ds = w * (dw - delta) / geo.norm;
                for (std::size_t c = 0; c < dh; ++c) {
                  const double kc = combine_values(klp[ij + c], krp[jk + c], kind);
                  if (gq) gq[ik + c] += ds * kc;
                  const double gkc = ds * qp[ik + c];
                  if (gkl) gkl[ij + c] += mul ? gkc * krp[jk + c] : gkc;
                  if (gkr) gkr[jk + c] += mul ? gkc * klp[ij + c] : gkc;
                }
              }
            }
          }
        }
      },
      "pivot_core_streamed");
}

namespace {

struct Projected {
  Var q, kl, kr, vl, vr;
};

Projected project(Tape& tape, Var r, const AttentionParams& p) {
  p.validate();
  const Tensor& rv = tape.value(r);
  pair_extent(rv, "pivotal_attention");
  if (rv.dim(2) != p.dim()) {
    throw ShapeError("pivotal_attention: relationship width " + std::to_string(rv.dim(2)) + " vs params " +
                     std::to_string(p.dim()));
  }
  return {nn::linear(tape, r, p.query), nn::linear(tape, r, p.key_left), nn::linear(tape, r, p.key_right),
          nn::linear(tape, r, p.value_left), nn::linear(tape, r, p.value_right)};
}

}  // namespace

Var pivotal_attention_naive(Tape& tape, Var r, const AttentionParams& p, CombineKind kind) {
  const Projected x = project(tape, r, p);
  return nn::linear(tape, pivot_core_naive(tape, x.q, x.kl, x.kr, x.vl, x.vr, p.heads, kind), p.out);
}

Var pivotal_attention_streamed(Tape& tape, Var r, const AttentionParams& p, CombineKind kind, std::size_t tile) {
  const Projected x = project(tape, r, p);
  return nn::linear(tape, pivot_core_streamed(tape, x.q, x.kl, x.kr, x.vl, x.vr, p.heads, kind, tile), p.out);
}

}  // namespace floydnet::attention
