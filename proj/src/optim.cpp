#include "glab/optim.hpp"

#include <cmath>

#include "glab/error.hpp"

namespace glab {

void AdamW::step(ParameterSet& params, double lr) {
  if (lr < 0.0) throw ContractError("AdamW: negative learning rate");
  for (const auto& p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw ShapeError("AdamW: gradient shape " + shape_string(p->grad.shape()) + " does not match parameter '" +
                       p->name + "' " + shape_string(p->value.shape()));
    }
    if (!p->grad.all_finite()) throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (inserted || mo.m.shape() != p->value.shape()) {
      mo.m = Tensor::zeros_like(p->value);
      mo.v = Tensor::zeros_like(p->value);
    }
    double* w = p->value.ptr();
    const double* g = p->grad.ptr();
    double* m = mo.m.ptr();
    double* v = mo.v.ptr();
    const std::size_t n = p->value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * config_.weight_decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double WarmupSchedule::lr_at(std::int64_t step) const {
  if (step < 0) throw ContractError("lr_at: negative step");
  if (warmup_steps <= 0 || step >= warmup_steps) return peak;
  return peak * (static_cast<double>(step) / static_cast<double>(warmup_steps));
}

}  // namespace glab
