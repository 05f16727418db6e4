#include "protoner/adam.hpp"

#include <cmath>
#include <unordered_set>

namespace protoner {

void adam_step(Parameter& param, AdamMoments& m, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ContractError("adam: learning rate must be positive");
  if (param.grad.shape() != param.value.shape()) {
    throw DimensionError("adam: gradient shape mismatch for " + param.name);
  }
  if (!param.grad.all_finite()) throw NumericError("adam: non-finite gradient for parameter " + param.name);
  if (m.first.shape() != param.value.shape()) {
    m.first = Tensor(param.value.shape());
    m.second = Tensor(param.value.shape());
    m.steps = 0;
  }
  ++m.steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(m.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(m.steps));
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.grad[i] + cfg.l2 * param.value[i];
    m.first[i] = cfg.beta1 * m.first[i] + (1.0 - cfg.beta1) * g;
    m.second[i] = cfg.beta2 * m.second[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m.first[i] / c1;
    const double vhat = m.second[i] / c2;
    param.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {
  std::unordered_set<const Parameter*> seen;
  for (const Parameter* p : params_) {
    if (p == nullptr) throw ContractError("adam: null parameter");
    if (!seen.insert(p).second) throw ContractError("adam: parameter registered twice: " + p->name);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], moments_[i], cfg_);
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace protoner
