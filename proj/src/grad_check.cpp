#include "rnnha/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "rnnha/errors.hpp"

namespace rnnha {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const LossBuilder& build) {
  ad::Graph graph;
  const double value = build(graph).item();
  if (!std::isfinite(value)) throw NumericError("loss is not finite during gradient check");
  return value;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, std::span<Tensor* const> params,
                           double step) {
  if (!(step > 0.0)) throw NumericError("gradient check step must be positive");
  std::vector<bool> saved_flags;
  for (Tensor* p : params) {
    saved_flags.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    ad::Graph graph;
    ad::Var loss = build(graph);
    if (!std::isfinite(loss.item())) throw NumericError("loss is not finite during gradient check");
    graph.backward(loss);
  }

  GradCheckResult result;
  for (Tensor* p : params) {
    std::vector<double> analytic(p->grad().begin(), p->grad().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double original = (*p)[i];
      (*p)[i] = original + step;
      const double up = evaluate(build);
      (*p)[i] = original - step;
      const double down = evaluate(build);
      (*p)[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
    result.per_param.push_back(worst);
    result.max_rel_error = std::max(result.max_rel_error, worst);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!saved_flags[i]) {
      std::vector<double> keep(params[i]->grad().begin(), params[i]->grad().end());
      params[i]->set_requires_grad(false);
      std::copy(keep.begin(), keep.end(), params[i]->grad().begin());
    }
  }
  return result;
}

}  // namespace rnnha
