#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "munlab/numerics/mlp.hpp"

namespace munlab {

// Scalar loss together with its analytic gradient w.r.t. an MlpParams.
struct LossEval {
  double value = 0.0;
  Grads grads;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Relative error used throughout: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares the analytic gradient returned by `loss(params)` against central
// differences of `loss(params).value`, one parameter at a time.
template <class LossFn>
GradCheckReport finite_diff_check(const MlpParams& params, LossFn&& loss, double tolerance, double h = 1e-5) {
  const LossEval base = loss(params);
  GradCheckReport report;
  MlpParams probe = params;
  const std::size_t n = parameter_count(params);
  for (std::size_t i = 0; i < n; ++i) {
    double& p = parameter_at(probe, i);
    const double saved = p;
    p = saved + h;
    const double up = loss(probe).value;
    p = saved - h;
    const double down = loss(probe).value;
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = relative_error(grad_at(base.grads, i), numeric);
    if (!(rel <= report.max_rel_error)) {
      report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      report.worst_index = i;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace munlab
