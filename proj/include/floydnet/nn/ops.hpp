#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "floydnet/nn/tape.hpp"

namespace floydnet::nn {

using ParamRefs = std::vector<Parameter*>;
using Rng = std::mt19937_64;

// Affine map along the last axis: y = x W + b, W is d_in x d_out.
struct Linear {
  Parameter weight;
  std::optional<Parameter> bias;

  std::size_t in_dim() const { return weight.value.dim(0); }
  std::size_t out_dim() const { return weight.value.dim(1); }

  // Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) weights, zero bias.
  static Linear init(const std::string& name, std::size_t d_in, std::size_t d_out, bool with_bias, Rng& rng);
  static Linear from(const std::string& name, Tensor weight, std::optional<Tensor> bias = std::nullopt);
  void collect(ParamRefs& out);
};

enum class NormKind { kLayerNorm, kRmsNorm };

struct Norm {
  Parameter gain;
  Parameter offset;
  double epsilon = 1e-5;
  NormKind kind = NormKind::kLayerNorm;

  std::size_t dim() const { return gain.value.size(); }
  static Norm init(const std::string& name, std::size_t d, NormKind kind = NormKind::kLayerNorm,
                   double epsilon = 1e-5);
  void collect(ParamRefs& out);
};

// Linear -> GELU -> Linear.
struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward init(const std::string& name, std::size_t d, std::size_t hidden, Rng& rng);
  void collect(ParamRefs& out);
};

Var linear(Tape& tape, Var x, const Linear& p);
Var layer_norm(Tape& tape, Var x, const Norm& p);
Var gelu(Tape& tape, Var x);
Var ffn(Tape& tape, Var x, const FeedForward& p);
Var softmax(Tape& tape, Var x, std::size_t axis);
Var sigmoid(Tape& tape, Var x);

Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var square(Tape& tape, Var x);
Var sum(Tape& tape, Var x);

// Same data under a new shape with equal element count.
Var reshape(Tape& tape, Var x, Shape shape);
// Concatenation along the last axis; leading shapes must match.
Var concat_last(Tape& tape, const std::vector<Var>& parts);
// Stacks inputs viewed as [rows, d] (all with the same d) into one [sum rows, d].
Var concat_rows(Tape& tape, const std::vector<Var>& parts);
// x viewed as [rows, d]; output row r is x row index[r], reshaped to
// out_shape (whose last axis must be d). Backward scatter-adds.
Var gather_rows(Tape& tape, Var x, std::vector<std::size_t> index, Shape out_shape);

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace floydnet::nn
