#include "floydnet/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace floydnet::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

ConstMatrixView as_matrix(const Tensor& t, std::size_t cols) {
  return ConstMatrixView(t.data(), static_cast<Eigen::Index>(cols == 0 ? 0 : t.size() / cols),
                         static_cast<Eigen::Index>(cols));
}

MatrixView as_matrix(Tensor& t, std::size_t cols) {
  return MatrixView(t.data(), static_cast<Eigen::Index>(cols == 0 ? 0 : t.size() / cols),
                    static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Shape with_last(Shape shape, std::size_t last) {
  shape.back() = last;
  return shape;
}

}  // namespace

Linear Linear::init(const std::string& name, std::size_t d_in, std::size_t d_out, bool with_bias, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(d_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({d_in, d_out});
  for (double& v : w.values()) v = dist(rng);
  Linear out{Parameter(name + ".weight", std::move(w)), std::nullopt};
  if (with_bias) out.bias.emplace(name + ".bias", Tensor({d_out}));
  return out;
}

Linear Linear::from(const std::string& name, Tensor weight, std::optional<Tensor> bias) {
  if (weight.rank() != 2) throw ShapeError("Linear weight must be rank 2, got " + shape_string(weight.shape()));
  Linear out{Parameter(name + ".weight", std::move(weight)), std::nullopt};
  if (bias) {
    if (bias->shape() != Shape{out.out_dim()}) throw ShapeError("Linear bias shape " + shape_string(bias->shape()));
    out.bias.emplace(name + ".bias", std::move(*bias));
  }
  return out;
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight);
  if (bias) out.push_back(&*bias);
}

Norm Norm::init(const std::string& name, std::size_t d, NormKind kind, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("norm epsilon must be positive");
  return Norm{Parameter(name + ".gain", Tensor({d}, 1.0)), Parameter(name + ".offset", Tensor({d})), epsilon, kind};
}

void Norm::collect(ParamRefs& out) {
  out.push_back(&gain);
  out.push_back(&offset);
}

FeedForward FeedForward::init(const std::string& name, std::size_t d, std::size_t hidden, Rng& rng) {
  if (hidden == 0) throw std::invalid_argument("ffn hidden dimension must be >= 1");
  return FeedForward{Linear::init(name + ".up", d, hidden, true, rng), Linear::init(name + ".down", hidden, d, true, rng)};
}

void FeedForward::collect(ParamRefs& out) {
  up.collect(out);
  down.collect(out);
}

Var linear(Tape& tape, Var x, const Linear& p) {
  const Tensor& xv = tape.value(x);
  const std::size_t d_in = p.in_dim();
  const std::size_t d_out = p.out_dim();
  if (xv.rank() == 0 || xv.last_dim() != d_in) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " does not end in " + std::to_string(d_in));
  }
  Var w = tape.parameter(p.weight);
  Var b = p.bias ? tape.parameter(*p.bias) : Var{};

  Tensor y(with_last(xv.shape(), d_out));
  auto ym = as_matrix(y, d_out);
  ym.noalias() = as_matrix(xv, d_in) * as_matrix(p.weight.value, d_out);
  if (p.bias) {
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(p.bias->value.data(), static_cast<Eigen::Index>(d_out));
  }

  std::vector<Var> inputs{x, w};
  if (b.valid()) inputs.push_back(b);
  return tape.record(
      std::move(y), std::move(inputs),
      [x, w, b, d_in, d_out](Tape& t, Var, const Tensor& gy) {
        auto gym = as_matrix(gy, d_out);
        if (t.requires_grad(x)) {
          Tensor& gx = t.grad_buffer(x);
          as_matrix(gx, d_in).noalias() += gym * as_matrix(t.value(w), d_out).transpose();
        }
        if (t.requires_grad(w)) {
          Tensor& gw = t.grad_buffer(w);
          as_matrix(gw, d_out).noalias() += as_matrix(t.value(x), d_in).transpose() * gym;
        }
        if (b.valid() && t.requires_grad(b)) {
          Tensor& gb = t.grad_buffer(b);
          Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(d_out)) += gym.colwise().sum();
        }
      },
      "linear");
}

Var layer_norm(Tape& tape, Var x, const Norm& p) {
  const Tensor& xv = tape.value(x);
  const std::size_t d = p.dim();
  if (d == 0 || xv.rank() == 0 || xv.last_dim() != d) {
    throw ShapeError("layer_norm: input " + shape_string(xv.shape()) + " vs dim " + std::to_string(d));
  }
  Var gain = tape.parameter(p.gain);
  Var offset = tape.parameter(p.offset);
  const std::size_t rows = xv.rows();
  const double* g = p.gain.value.data();
  const double* o = p.offset.value.data();
  const bool rms = p.kind == NormKind::kRmsNorm;

  // Normalized activations and per-row inverse scale are kept for backward.
  Tensor xhat(xv.shape());
  Tensor inv_scale({rows});
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mean = 0.0;
    if (!rms) {
      for (std::size_t c = 0; c < d; ++c) mean += xr[c];
      mean /= static_cast<double>(d);
    }
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + p.epsilon);
    inv_scale[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (xr[c] - mean) * inv;
      xhat[r * d + c] = h;
      y[r * d + c] = g[c] * h + o[c];
    }
  }

  return tape.record(
      std::move(y), {x, gain, offset},
      [x, gain, offset, d, rows, rms, xhat = std::move(xhat), inv_scale = std::move(inv_scale)](
          Tape& t, Var, const Tensor& gy) {
        const double* gv = t.value(gain).data();
        if (t.requires_grad(gain) || t.requires_grad(offset)) {
          Tensor& gg = t.grad_buffer(gain);
          Tensor& go = t.grad_buffer(offset);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              gg[c] += gy[r * d + c] * xhat[r * d + c];
              go[c] += gy[r * d + c];
            }
          }
        }
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_buffer(x);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_gh = 0.0;
          double mean_gh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double gh = gy[r * d + c] * gv[c];
            mean_gh += gh;
            mean_gh_h += gh * xhat[r * d + c];
          }
          mean_gh *= inv_d;
          mean_gh_h *= inv_d;
          if (rms) mean_gh = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double gh = gy[r * d + c] * gv[c];
            gx[r * d + c] += inv_scale[r] * (gh - mean_gh - xhat[r * d + c] * mean_gh_h);
          }
        }
      },
      rms ? "rms_norm" : "layer_norm");
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

Var gelu(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = gelu_value(xv[i]);
  return tape.record(
      std::move(y), {x},
      [x](Tape& t, Var, const Tensor& gy) {
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * gelu_derivative(xv[i]);
      },
      "gelu");
}

Var ffn(Tape& tape, Var x, const FeedForward& p) {
  if (p.up.in_dim() != p.down.out_dim()) throw ShapeError("ffn: up/down projections disagree on model dim");
  return linear(tape, gelu(tape, linear(tape, x, p.up)), p.down);
}

Var softmax(Tape& tape, Var x, std::size_t axis) {
  const Tensor& xv = tape.value(x);
  if (axis >= xv.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(xv.shape()));
  }
  const Shape& s = xv.shape();
  const std::size_t extent = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];

  Tensor y(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < extent; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < extent; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < extent; ++j) y[base + j * inner] /= total;
    }
  }

  return tape.record(
      std::move(y), {x},
      [x, outer, inner, extent](Tape& t, Var self, const Tensor& gy) {
        const Tensor& yv = t.value(self);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < extent; ++j) dot += yv[base + j * inner] * gy[base + j * inner];
            for (std::size_t j = 0; j < extent; ++j) {
              const std::size_t idx = base + j * inner;
              gx[idx] += yv[idx] * (gy[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

Var sigmoid(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    y[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return tape.record(
      std::move(y), {x},
      [x](Tape& t, Var self, const Tensor& gy) {
        const Tensor& yv = t.value(self);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < yv.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
      },
      "sigmoid");
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor y = av;
  y.add_(bv);
  return tape.record(
      std::move(y), {a, b},
      [a, b](Tape& t, Var, const Tensor& gy) {
        t.accumulate(a, gy);
        t.accumulate(b, gy);
      },
      "add");
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return tape.record(
      std::move(y), {a, b},
      [a, b](Tape& t, Var, const Tensor& gy) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
          Tensor& ga = t.grad_buffer(a);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (t.requires_grad(b)) {
          Tensor& gb = t.grad_buffer(b);
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        }
      },
      "mul");
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor y = tape.value(x);
  y.scale_(factor);
  return tape.record(
      std::move(y), {x},
      [x, factor](Tape& t, Var, const Tensor& gy) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
      },
      "scale");
}

Var square(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * xv[i];
  return tape.record(
      std::move(y), {x},
      [x](Tape& t, Var, const Tensor& gy) {
        const Tensor& xv = t.value(x);
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * gy[i];
      },
      "square");
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double total = 0.0;
  for (double v : xv.values()) total += v;
  return tape.record(
      Tensor({}, {total}), {x},
      [x](Tape& t, Var, const Tensor& gy) {
        Tensor& gx = t.grad_buffer(x);
        for (double& v : gx.values()) v += gy[0];
      },
      "sum");
}

Var reshape(Tape& tape, Var x, Shape shape) {
  const Shape from = tape.shape(x);
  Tensor y = tape.value(x).reshaped(std::move(shape));
  return tape.record(
      std::move(y), {x},
      [x, from](Tape& t, Var, const Tensor& gy) { t.accumulate(x, gy.reshaped(from)); },
      "reshape");
}

Var concat_last(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const Tensor& first = tape.value(parts[0]);
  const std::size_t rows = first.rows();
  Shape lead(first.shape().begin(), first.shape().end() - (first.rank() ? 1 : 0));
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var v : parts) {
    const Tensor& t = tape.value(v);
    Shape l(t.shape().begin(), t.shape().end() - (t.rank() ? 1 : 0));
    if (l != lead) throw ShapeError("concat_last: leading shapes differ");
    widths.push_back(t.last_dim());
    total += t.last_dim();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = tape.value(parts[p]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(t.data() + r * widths[p], widths[p], y.data() + r * total + offset);
    offset += widths[p];
  }
  return tape.record(
      std::move(y), parts,
      [parts, widths, rows, total](Tape& t, Var, const Tensor& gy) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (t.requires_grad(parts[p])) {
            Tensor& g = t.grad_buffer(parts[p]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[p]; ++c) g[r * widths[p] + c] += gy[r * total + offset + c];
          }
          offset += widths[p];
        }
      },
      "concat_last");
}

Var concat_rows(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t d = tape.value(parts[0]).last_dim();
  std::size_t rows = 0;
  for (Var v : parts) {
    if (tape.value(v).last_dim() != d) throw ShapeError("concat_rows: widths differ");
    rows += tape.value(v).rows();
  }
  Tensor y({rows, d});
  std::size_t at = 0;
  for (Var v : parts) {
    const Tensor& t = tape.value(v);
    std::copy_n(t.data(), t.size(), y.data() + at);
    at += t.size();
  }
  return tape.record(
      std::move(y), parts,
      [parts](Tape& t, Var, const Tensor& gy) {
        std::size_t at = 0;
        for (Var v : parts) {
          const std::size_t n = t.value(v).size();
          if (t.requires_grad(v)) {
            Tensor& g = t.grad_buffer(v);
            for (std::size_t i = 0; i < n; ++i) g[i] += gy[at + i];
          }
          at += n;
        }
      },
      "concat_rows");
}

Var gather_rows(Tape& tape, Var x, std::vector<std::size_t> index, Shape out_shape) {
  const Tensor& xv = tape.value(x);
  const std::size_t d = xv.last_dim();
  if (out_shape.empty() || out_shape.back() != d || shape_size(out_shape) != index.size() * d) {
    throw ShapeError("gather_rows: output shape " + shape_string(out_shape) + " does not fit " +
                     std::to_string(index.size()) + " rows of width " + std::to_string(d));
  }
  const std::size_t rows = xv.rows();
  Tensor y(std::move(out_shape));
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(xv.data() + index[r] * d, d, y.data() + r * d);
  }
  return tape.record(
      std::move(y), {x},
      [x, index = std::move(index), d](Tape& t, Var, const Tensor& gy) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t r = 0; r < index.size(); ++r)
          for (std::size_t c = 0; c < d; ++c) gx[index[r] * d + c] += gy[r * d + c];
      },
      "gather_rows");
}

}  // namespace floydnet::nn
