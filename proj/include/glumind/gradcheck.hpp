#pragma once

#include "glumind/autodiff.hpp"

#include <functional>
#include <string>

namespace glumind {

/// Scalar objective built on a tape from bound parameters.
using Objective = std::function<Var(Tape&, const ParamBinding&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() against central differences on every coordinate.
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8). `eps` must
/// lie in [1e-7, 1e-3]. `params` is restored before returning.
GradCheckResult grad_check(const Objective& f, ParamStore& params, double eps = 1e-6);

}  // namespace glumind
