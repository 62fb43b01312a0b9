#include "floydnet/attention/rotation.hpp"

#include <cmath>

namespace floydnet::attention {

using nn::Tensor;

namespace {
constexpr std::size_t kWidth = 27;

Tensor padded(const Mat3& m) {
  Tensor t({1, kWidth});
  for (std::size_t i = 0; i < 9; ++i) t[i] = m[i];
  return t;
}
}  // namespace

RotationMaps rotation_maps() {
  Tensor a({kWidth, kWidth}), b({kWidth, kWidth}), c({kWidth, kWidth});
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t t = 0; t < 3; ++t) a[r * kWidth + 3 * r + t] = 1.0;
    for (std::size_t s = 0; s < 3; ++s) b[r * kWidth + r + 9 * s] = 1.0;
  }
  // printed 9 x 27 matrix, transposed into the 27 x 9 output block
  for (std::size_t a_row = 0; a_row < 3; ++a_row)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t mid = 0; mid < 3; ++mid) c[(9 * a_row + 3 * mid + t) * kWidth + 3 * a_row + t] = 1.0;
  return {nn::Linear::from("rotation.left", std::move(a)), nn::Linear::from("rotation.right", std::move(b)),
          nn::Linear::from("rotation.out", std::move(c))};
}

bool is_rotation(const Mat3& m, double tol) {
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 3; ++k) dot += m[i * 3 + k] * m[j * 3 + k];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  return std::abs(det - 1.0) <= tol;
}

Mat3 mat3_product(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

Mat3 random_rotation(nn::Rng& rng) {
  std::normal_distribution<double> gauss;
  double w = gauss(rng), x = gauss(rng), y = gauss(rng), z = gauss(rng);
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Mat3 rotation_z(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

Mat3 rotation_compose_check(const Mat3& t_a, const Mat3& t_b, double tol) {
  if (!is_rotation(t_a, tol) || !is_rotation(t_b, tol)) {
    throw RotationError("rotation_compose_check: inputs must be orthogonal with determinant 1");
  }
  static const RotationMaps maps = rotation_maps();
  Tape tape;
  tape.set_recording(false);
  const Var va = nn::linear(tape, tape.constant(padded(t_a)), maps.left);
  const Var vb = nn::linear(tape, tape.constant(padded(t_b)), maps.right);
  const Var o = nn::linear(tape, combine(tape, va, vb, CombineKind::kMultiplicative), maps.out);
  const Tensor& ov = tape.value(o);
  Mat3 result;
  for (std::size_t i = 0; i < 9; ++i) result[i] = ov[i];
  return result;
}

}  // namespace floydnet::attention
