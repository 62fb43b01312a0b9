#include "floydnet/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace floydnet::nn {
namespace {

double evaluate(const ScalarObjective& f) {
  Tape tape;
  tape.set_recording(false);
  const Var out = f(tape);
  const Tensor& v = tape.value(out);
  if (v.size() != 1) throw ShapeError("grad_check objective must be scalar, got " + shape_string(v.shape()));
  if (!std::isfinite(v[0])) throw NumericError("grad_check objective is non-finite");
  return v[0];
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport grad_check(const ScalarObjective& f, const ParamRefs& params, double eps, double tol) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var out = f(tape);
    tape.backward(out);
  }

  GradCheckReport report;
  report.passed = true;
  for (Parameter* p : params) {
    const Tensor analytic = p->grad;
    Tensor numeric(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = evaluate(f);
      p->value[i] = saved - eps;
      const double minus = evaluate(f);
      p->value[i] = saved;
      numeric[i] = (plus - minus) / (2.0 * eps);
    }
    double scale = 0.0;
    double diff = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      if (!std::isfinite(analytic[i])) throw NumericError("non-finite analytic gradient for " + p->name);
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    }
    GradCheckEntry entry;
    entry.name = p->name;
    entry.max_abs_error = diff;
    entry.max_rel_error = scale > 0.0 ? diff / scale : 0.0;
    entry.passed = entry.max_rel_error < tol;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace floydnet::nn
