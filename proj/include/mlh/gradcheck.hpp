#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mlh/autodiff.hpp"

namespace mlh {

// Central-difference gradient check. `build` must rebuild the forward graph
// from the current parameter values on every call; the numeric side uses only
// those forward evaluations, so it is independent of every backward rule.
// Returns max over coordinates of |analytic - numeric| / max(1e-12,
// |analytic| + |numeric|).
inline double finite_diff_check(const std::function<NodePtr()>& build,
                                const std::vector<NodePtr>& params,
                                double eps = 1e-5) {
  check(eps > 0.0, "bad_config", "finite_diff_check eps must be positive");
  NodePtr loss = build();
  check(loss->value.rows() == 1 && loss->value.cols() == 1, "non_scalar_loss",
        "finite_diff_check requires a scalar loss");
  check(std::isfinite(loss->value(0, 0)), "non_finite", "loss is not finite");
  zero_grad(params);
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    double v = build()->value(0, 0);
    check(std::isfinite(v), "non_finite", "perturbed loss is not finite");
    return v;
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& theta = params[pi]->value;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double saved = theta[i];
      theta[i] = saved + eps;
      double plus = eval();
      theta[i] = saved - eps;
      double minus = eval();
      theta[i] = saved;
      double numeric = (plus - minus) / (2.0 * eps);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) /
                   std::max(1e-12, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace mlh
