#pragma once

#include <random>

#include "floydnet/nn/ops.hpp"

namespace floydnet::testutil {

inline nn::Tensor random_tensor(nn::Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// y = x W + b for one row.
inline std::vector<double> apply_linear(const nn::Linear& p, const double* x) {
  const std::size_t din = p.in_dim(), dout = p.out_dim();
  std::vector<double> y(dout, 0.0);
  for (std::size_t o = 0; o < dout; ++o) {
    double acc = p.bias ? p.bias->value[o] : 0.0;
    for (std::size_t i = 0; i < din; ++i) acc += x[i] * p.weight.value[i * dout + o];
    y[o] = acc;
  }
  return y;
}

inline void randomize_biases(nn::Linear& p, nn::Rng& rng) {
  if (p.bias) p.bias->value = random_tensor(p.bias->value.shape(), rng);
}

}  // namespace floydnet::testutil
