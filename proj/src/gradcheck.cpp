#include "glumind/gradcheck.hpp"

#include "glumind/errors.hpp"

#include <algorithm>
#include <cmath>

namespace glumind {

namespace {

double evaluate(const Objective& f, const ParamStore& params) {
  Tape tape(false);
  ParamBinding binding(tape, params);
  return f(tape, binding).item();
}

}  // namespace

GradCheckResult grad_check(const Objective& f, ParamStore& params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check eps must lie in [1e-7, 1e-3]");

  {
    Tape tape(true);
    ParamBinding binding(tape, params);
    backward(f(tape, binding), binding, params);
  }

  GradCheckResult result;
  for (auto& [name, t] : params) {
    const Matrix analytic = *t.grad;
    for (Index i = 0; i < t.data.size(); ++i) {
      double& theta = t.data.data()[i];
      const double saved = theta;
      theta = saved + eps;
      const double up = evaluate(f, params);
      theta = saved - eps;
      const double down = evaluate(f, params);
      theta = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = GradCheckResult{rel, name, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace glumind
