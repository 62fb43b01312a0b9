#include "floydnet/attention/korder.hpp"

#include <cmath>

namespace floydnet::attention {

using nn::Shape;
using nn::ShapeError;
using nn::Tensor;

namespace {

struct TupleGeometry {
  std::size_t order;
  std::size_t n;
  std::size_t tuples;                // N^k
  std::vector<std::size_t> strides;  // stride of position a in the flat tuple index

  std::size_t coord(std::size_t e, std::size_t a) const { return (e / strides[a]) % n; }
  std::size_t substitute(std::size_t e, std::size_t a, std::size_t p) const {
    return e - coord(e, a) * strides[a] + p * strides[a];
  }
};

TupleGeometry tuple_geometry(const Shape& shape, std::size_t order, const char* op) {
  if (order < 1 || order > 3) throw CapabilityError(std::string(op) + ": order must be 1, 2 or 3");
  if (shape.size() < order + 1) throw ShapeError(std::string(op) + ": rank too small for order");
  const std::size_t n = shape[0];
  for (std::size_t a = 0; a < order; ++a) {
    if (shape[a] != n) throw ShapeError(std::string(op) + ": node axes must have equal extents");
  }
  TupleGeometry g{order, n, 1, std::vector<std::size_t>(order)};
  for (std::size_t a = order; a-- > 0;) {
    g.strides[a] = g.tuples;
    g.tuples *= n;
  }
  return g;
}

Shape tuple_shape(std::size_t order, std::size_t n, std::size_t pivot_axis, std::size_t last) {
  Shape s(order, n);
  if (pivot_axis) s.push_back(n);
  s.push_back(last);
  return s;
}

void check_feasible(const TupleGeometry& g, std::size_t d) {
  const double elements = static_cast<double>(g.tuples) * static_cast<double>(g.n) * static_cast<double>(d);
  if (elements > static_cast<double>(kMaxKOrderElements)) {
    throw CapabilityError("korder attention: [N^k, N, d] intermediates with N=" + std::to_string(g.n) +
                          ", k=" + std::to_string(g.order) + ", d=" + std::to_string(d) +
                          " exceed the enumeration budget");
  }
}

}  // namespace

KOrderAttentionParams KOrderAttentionParams::init(const std::string& name, std::size_t order, std::size_t dim,
                                                  std::size_t heads, nn::Rng& rng) {
  if (order < 1 || order > 3) throw CapabilityError("k-order attention supports k in {1, 2, 3}");
  KOrderAttentionParams p;
  p.order = order;
  p.heads = heads;
  p.query = nn::Linear::init(name + ".query", dim, dim, true, rng);
  for (std::size_t a = 0; a < order; ++a) {
    p.keys.push_back(nn::Linear::init(name + ".key" + std::to_string(a), dim, dim, false, rng));
  }
  for (std::size_t a = 0; a < order; ++a) {
    p.values.push_back(nn::Linear::init(name + ".value" + std::to_string(a), dim, dim, false, rng));
  }
  p.out = nn::Linear::init(name + ".out", dim, dim, true, rng);
  p.validate();
  return p;
}

KOrderAttentionParams KOrderAttentionParams::from_pivotal(const AttentionParams& p) {
  KOrderAttentionParams out;
  out.order = 2;
  out.heads = p.heads;
  out.query = p.query;
  out.keys = {p.key_right, p.key_left};
  out.values = {p.value_right, p.value_left};
  out.out = p.out;
  return out;
}

void KOrderAttentionParams::collect(nn::ParamRefs& out_params) {
  query.collect(out_params);
  for (auto& k : keys) k.collect(out_params);
  for (auto& v : values) v.collect(out_params);
  out.collect(out_params);
}

void KOrderAttentionParams::validate() const {
  if (order < 1 || order > 3) throw CapabilityError("k-order attention supports k in {1, 2, 3}");
  if (keys.size() != order || values.size() != order) {
    throw ShapeError("k-order attention needs exactly k key and k value projection sets");
  }
  const std::size_t d = dim();
  if (heads == 0 || d % heads != 0) throw ShapeError("k-order attention: d not divisible by heads");
  for (const auto* set : {&keys, &values}) {
    for (const auto& l : *set) {
      if (l.in_dim() != d || l.out_dim() != d) throw ShapeError("k-order attention: projections must be d x d");
    }
  }
}

Var tuple_combine(Tape& tape, const std::vector<Var>& projected, std::size_t order, CombineKind kind) {
  if (projected.size() != order) throw ShapeError("tuple_combine: need one projection per position");
  const Tensor& first = tape.value(projected[0]);
  const TupleGeometry geo = tuple_geometry(first.shape(), order, "tuple_combine");
  if (first.rank() != order + 1) throw ShapeError("tuple_combine: expected [N]*k + [d]");
  const std::size_t d = first.last_dim();
  for (Var v : projected) {
    if (tape.shape(v) != first.shape()) throw ShapeError("tuple_combine: projections must share shape");
  }
  check_feasible(geo, d);
  const std::size_t n = geo.n;
  std::vector<const double*> src;
  for (Var v : projected) src.push_back(tape.value(v).data());

  Tensor out(tuple_shape(order, n, 1, d));
  for (std::size_t e = 0; e < geo.tuples; ++e) {
    for (std::size_t p = 0; p < n; ++p) {
      double* o = out.data() + (e * n + p) * d;
      const double* a0 = src[0] + geo.substitute(e, 0, p) * d;
      for (std::size_t c = 0; c < d; ++c) o[c] = a0[c];
      for (std::size_t a = 1; a < order; ++a) {
        const double* aa = src[a] + geo.substitute(e, a, p) * d;
        for (std::size_t c = 0; c < d; ++c) o[c] = combine_values(o[c], aa[c], kind);
      }
    }
  }
  return tape.record(
      std::move(out), projected,
      [projected, geo, d, kind](Tape& t, Var, const Tensor& g) {
        const std::size_t n = geo.n;
        const std::size_t k = geo.order;
        std::vector<const double*> src;
        std::vector<double*> dst;
        for (Var v : projected) {
          src.push_back(t.value(v).data());
          dst.push_back(t.requires_grad(v) ? t.grad_buffer(v).data() : nullptr);
        }
        std::vector<std::size_t> at(k);
        for (std::size_t e = 0; e < geo.tuples; ++e) {
          for (std::size_t p = 0; p < n; ++p) {
            const double* go = g.data() + (e * n + p) * d;
            for (std::size_t a = 0; a < k; ++a) at[a] = geo.substitute(e, a, p) * d;
            for (std::size_t a = 0; a < k; ++a) {
              if (!dst[a]) continue;
              for (std::size_t c = 0; c < d; ++c) {
                double factor = 1.0;
                if (kind == CombineKind::kMultiplicative) {
                  for (std::size_t b = 0; b < k; ++b)
                    if (b != a) factor *= src[b][at[b] + c];
                }
                dst[a][at[a] + c] += go[c] * factor;
              }
            }
          }
        }
      },
      "tuple_combine");
}

Var tuple_scores(Tape& tape, Var q, Var combined_keys, std::size_t order, std::size_t heads) {
  const Tensor& qv = tape.value(q);
  const Tensor& kv = tape.value(combined_keys);
  const TupleGeometry geo = tuple_geometry(qv.shape(), order, "tuple_scores");
  const std::size_t n = geo.n;
  const std::size_t d = qv.last_dim();
  if (heads == 0 || d % heads != 0) throw ShapeError("tuple_scores: d not divisible by heads");
  if (kv.shape() != tuple_shape(order, n, 1, d)) throw ShapeError("tuple_scores: combined keys shape mismatch");
  const std::size_t dh = d / heads;
  const double norm = std::sqrt(static_cast<double>(dh));
  Tensor out(tuple_shape(order, n, 1, heads));
  for (std::size_t e = 0; e < geo.tuples; ++e)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qa = qv.data() + e * d + h * dh;
        const double* ka = kv.data() + (e * n + p) * d + h * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qa[c] * ka[c];
        out[(e * n + p) * heads + h] = dot / norm;
      }
  return tape.record(
      std::move(out), {q, combined_keys},
      [q, combined_keys, geo, d, heads, dh, norm](Tape& t, Var, const Tensor& g) {
        const std::size_t n = geo.n;
        const Tensor& qv = t.value(q);
        const Tensor& kv = t.value(combined_keys);
        Tensor* gq = t.requires_grad(q) ? &t.grad_buffer(q) : nullptr;
        Tensor* gk = t.requires_grad(combined_keys) ? &t.grad_buffer(combined_keys) : nullptr;
        for (std::size_t e = 0; e < geo.tuples; ++e)
          for (std::size_t p = 0; p < n; ++p)
            for (std::size_t h = 0; h < heads; ++h) {
              const double gs = g[(e * n + p) * heads + h] / norm;
              const std::size_t qo = e * d + h * dh;
              const std::size_t ko = (e * n + p) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                if (gq) (*gq)[qo + c] += gs * kv[ko + c];
                if (gk) (*gk)[ko + c] += gs * qv[qo + c];
              }
            }
      },
      "tuple_scores");
}

Var tuple_weighted_sum(Tape& tape, Var weights, Var combined_values, std::size_t order) {
  const Tensor& wv = tape.value(weights);
  const Tensor& vv = tape.value(combined_values);
  const TupleGeometry geo = tuple_geometry(vv.shape(), order, "tuple_weighted_sum");
  const std::size_t n = geo.n;
  const std::size_t d = vv.last_dim();
  const std::size_t heads = wv.last_dim();
  if (heads == 0 || d % heads != 0) throw ShapeError("tuple_weighted_sum: d not divisible by heads");
  if (vv.shape() != tuple_shape(order, n, 1, d) || wv.shape() != tuple_shape(order, n, 1, heads)) {
    throw ShapeError("tuple_weighted_sum: shape mismatch");
  }
  const std::size_t dh = d / heads;
  Tensor out(tuple_shape(order, n, 0, d));
  for (std::size_t e = 0; e < geo.tuples; ++e)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += wv[(e * n + p) * heads + c / dh] * vv[(e * n + p) * d + c];
      out[e * d + c] = acc;
    }
  return tape.record(
      std::move(out), {weights, combined_values},
      [weights, combined_values, geo, d, heads, dh](Tape& t, Var, const Tensor& g) {
        const std::size_t n = geo.n;
        const Tensor& wv = t.value(weights);
        const Tensor& vv = t.value(combined_values);
        Tensor* gw = t.requires_grad(weights) ? &t.grad_buffer(weights) : nullptr;
        Tensor* gv = t.requires_grad(combined_values) ? &t.grad_buffer(combined_values) : nullptr;
        for (std::size_t e = 0; e < geo.tuples; ++e)
          for (std::size_t p = 0; p < n; ++p)
            for (std::size_t c = 0; c < d; ++c) {
              const double go = g[e * d + c];
              const std::size_t widx = (e * n + p) * heads + c / dh;
              const std::size_t vidx = (e * n + p) * d + c;
              if (gw) (*gw)[widx] += go * vv[vidx];
              if (gv) (*gv)[vidx] += go * wv[widx];
            }
      },
      "tuple_weighted_sum");
}

Var korder_pivotal_attention(Tape& tape, Var r, const KOrderAttentionParams& p, CombineKind kind) {
  p.validate();
  const Tensor& rv = tape.value(r);
  const TupleGeometry geo = tuple_geometry(rv.shape(), p.order, "korder_pivotal_attention");
  if (rv.rank() != p.order + 1 || rv.last_dim() != p.dim()) {
    throw ShapeError("korder_pivotal_attention: expected [N]*k + [d] with d=" + std::to_string(p.dim()) + ", got " +
                     nn::shape_string(rv.shape()));
  }
  check_feasible(geo, p.dim());
  const Var q = nn::linear(tape, r, p.query);
  std::vector<Var> keys, vals;
  for (const auto& l : p.keys) keys.push_back(nn::linear(tape, r, l));
  for (const auto& l : p.values) vals.push_back(nn::linear(tape, r, l));
  const Var kc = tuple_combine(tape, keys, p.order, kind);
  const Var vc = tuple_combine(tape, vals, p.order, kind);
  const Var scores = tuple_scores(tape, q, kc, p.order, p.heads);
  const Var weights = nn::softmax(tape, scores, p.order);
  return nn::linear(tape, tuple_weighted_sum(tape, weights, vc, p.order), p.out);
}

}  // namespace floydnet::attention
