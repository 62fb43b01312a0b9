#include "floydnet/nn/tape.hpp"

#include <algorithm>

namespace floydnet::nn {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, "constant"});
  grads_.emplace_back();
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, recording_, "parameter"});
  grads_.emplace_back();
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, recording_, "input"});
  grads_.emplace_back();
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw std::out_of_range(std::string("dangling input to ") + op);
  }
  const bool needs = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                               [this](Var in) { return nodes_[in.id].requires_grad; });
  Node node{std::move(value), std::move(inputs), needs ? std::move(backward) : BackwardFn{}, nullptr, needs, op};
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  auto& slot = grads_.at(v.id);
  if (!slot) slot.emplace(nodes_[v.id].value.shape());
  return *slot;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_.at(v.id).requires_grad) return;
  grad_buffer(v).add_(g);
}

const Tensor* Tape::grad(Var v) const {
  const auto& slot = grads_.at(v.id);
  return slot ? &*slot : nullptr;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward(loss) requires a single-element loss, got " + shape_string(shape(loss)));
  }
  backward(loss, Tensor(shape(loss), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (seed.shape() != shape(output)) {
    throw ShapeError("backward seed " + shape_string(seed.shape()) + " vs output " + shape_string(shape(output)));
  }
  grad_buffer(output).add_(seed);
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!grads_[id] || !node.requires_grad) continue;
    if (node.param) {
      if (node.param->grad.shape() != node.value.shape()) node.param->zero_grad();
      node.param->grad.add_(*grads_[id]);
    } else if (node.backward) {
      node.backward(*this, Var{id}, *grads_[id]);
    }
  }
}

}  // namespace floydnet::nn
