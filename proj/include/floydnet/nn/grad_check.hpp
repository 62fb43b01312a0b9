#pragma once

#include <functional>
#include <string>
#include <vector>

#include "floydnet/nn/ops.hpp"

namespace floydnet::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = false;
  double worst() const;
};

// Builds the scalar objective on a fresh tape from the current parameter
// values. It is invoked once for the analytic pass and twice per perturbed
// coordinate.
using ScalarObjective = std::function<Var(Tape&)>;

// Compares Tape::backward gradients against central finite differences
// (f(x+eps) - f(x-eps)) / 2eps for every coordinate of every parameter.
// Relative error is measured per parameter tensor:
//   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
// so that coordinates with vanishing gradient are judged against the scale of
// the tensor they belong to. Throws NumericError if any evaluation is non-finite.
GradCheckReport grad_check(const ScalarObjective& f, const ParamRefs& params, double eps, double tol);

}  // namespace floydnet::nn
