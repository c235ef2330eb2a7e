#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "sbl/errors.hpp"
#include "sbl/param.hpp"

namespace sbl {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences against the tape's reverse-mode gradients.
//
// `eval(with_grad)` must rebuild the forward pass from the current parameter
// values and return the scalar loss; when `with_grad` it must also run
// backward so gradients accumulate into the store. The function must be
// deterministic: two identical evaluations are required to agree bit-exactly.
//
// Relative error per entry is |analytic - numeric| / max(1e-8, |analytic| +
// |numeric|). Differences below the resolution of the finite-difference
// stencil itself (double rounding of the loss divided by 2h, with a safety
// factor) cannot be distinguished from an exact match and are skipped.
inline GradCheckResult grad_check(const std::function<double(bool)>& eval, ParamStore& params,
                                  double h = 1e-5) {
  double l0 = eval(false);
  double l1 = eval(false);
  if (l0 != l1)
    throw ContractError("grad_check: function is nondeterministic (losses " + std::to_string(l0) +
                        " vs " + std::to_string(l1) + ")");

  params.zero_grad();
  eval(true);

  double fd_resolution = 1e-9 * std::max(1.0, std::fabs(l0));

  GradCheckResult res;
  for (Param& p : params) {
    for (int64_t i = 0; i < p.size(); ++i) {
      double saved = p.value[i];
      p.value[i] = saved + h;
      double fp = eval(false);
      p.value[i] = saved - h;
      double fm = eval(false);
      p.value[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = p.grad[i];
      double diff = std::fabs(analytic - numeric);
      if (diff < fd_resolution) continue;
      double rel = diff / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p.name;
        res.worst_index = i;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace sbl
