#ifndef RNNHA_GRAD_CHECK_HPP_
#define RNNHA_GRAD_CHECK_HPP_

#include <functional>
#include <span>
#include <vector>

#include "rnnha/autodiff.hpp"

namespace rnnha {

/// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<ad::Var(ad::Graph&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// One entry per checked tensor, in the order given.
  std::vector<double> per_param;
};

/// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

/**
 * Compares reverse-mode gradients against central differences
 * (f(θ+h) - f(θ-h)) / 2h, coordinate by coordinate. Parameter values are
 * restored on return; their grad buffers hold the analytic gradient.
 */
GradCheckResult grad_check(const LossBuilder& build, std::span<Tensor* const> params,
                           double step = 1e-5);

}  // namespace rnnha

#endif  // RNNHA_GRAD_CHECK_HPP_
