#pragma once

#include <array>

#include "floydnet/attention/pivotal.hpp"

namespace floydnet::attention {

using Mat3 = std::array<double, 9>;  // row-major

class RotationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The fixed value/output maps for composing rotations with the
// multiplicative combine, as 27 x 27 weights (inputs zero-padded to 27).
struct RotationMaps {
  nn::Linear left;   // 9 live input rows, 27 outputs
  nn::Linear right;  // 9 live input rows, 27 outputs
  nn::Linear out;    // 27 inputs, 9 live outputs
};
RotationMaps rotation_maps();

// Runs left(t_a) (*) right(t_b) followed by out on the tape and returns the
// leading 9 outputs as a 3 x 3 matrix. Throws RotationError unless both
// inputs are orthogonal with det 1 (to within tol).
Mat3 rotation_compose_check(const Mat3& t_a, const Mat3& t_b, double tol = 1e-9);

bool is_rotation(const Mat3& m, double tol = 1e-9);
Mat3 mat3_product(const Mat3& a, const Mat3& b);
// Uniformly distributed rotation from a normalized Gaussian quaternion.
Mat3 random_rotation(nn::Rng& rng);
Mat3 rotation_z(double radians);

}  // namespace floydnet::attention
