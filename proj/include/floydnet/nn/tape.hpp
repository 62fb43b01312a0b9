#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "floydnet/nn/tensor.hpp"

namespace floydnet::nn {

// A learnable tensor. `grad` is an accumulator written by Tape::backward and
// cleared by the optimizer, so it is mutable through const parameter sets.
struct Parameter {
  std::string name;
  Tensor value;
  mutable Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() const { grad = Tensor::zeros_like(value); }
};

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape;

// Reads the upstream gradient of node `self` and accumulates into its inputs.
using BackwardFn = std::function<void(Tape&, Var self, const Tensor& grad_out)>;

// Records primitive applications in execution (hence topological) order and
// replays their hand-derived backward functions in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When recording is off, values are still kept but backward closures are
  // dropped; used for inference-only passes.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  Var constant(Tensor value);
  // Leaf whose gradient will be added into `p.grad` by backward().
  Var parameter(const Parameter& p);
  // Leaf whose gradient is kept on the tape (grad_check inputs).
  Var input(Tensor value);

  // Appends a node. Inputs that do not require grad are skipped during
  // backward. Throws NumericError if the value contains NaN or Inf.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const char* op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Var>& inputs(Var v) const { return nodes_.at(v.id).inputs; }

  // Gradient accumulator for `v`, allocated on first use.
  Tensor& grad_buffer(Var v);
  void accumulate(Var v, const Tensor& g);
  const Tensor* grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 for a single-element loss.
  void backward(Var loss);
  void backward(Var output, const Tensor& seed);

 private:
  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
  };

  std::deque<Node> nodes_;  // stable references across appends
  std::deque<std::optional<Tensor>> grads_;
  bool recording_ = true;
};

}  // namespace floydnet::nn
