#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "floydnet/nn/memory.hpp"

namespace floydnet::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Storage is accounted by the memory
// tracker so kernels can be instrumented for peak auxiliary usage.
class Tensor {
 public:
  using Buffer = std::vector<double, memory::TrackingAllocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::initializer_list<double> values);
  Tensor(Shape shape, std::span<const double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return {data_.data(), data_.size()}; }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Size of the trailing axis, or 1 for a rank-0 tensor.
  std::size_t last_dim() const { return shape_.empty() ? 1 : shape_.back(); }
  // Number of rows when viewed as [size / last_dim, last_dim].
  std::size_t rows() const { return last_dim() == 0 ? 0 : size() / last_dim(); }

  // Same storage reinterpreted under a new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const;
  void fill(double value);
  // this += other, elementwise; shapes must match.
  void add_(const Tensor& other);
  void scale_(double factor);

 private:
  Shape shape_;
  Buffer data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace floydnet::nn
