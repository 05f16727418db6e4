#pragma once

#include <cstddef>
#include <vector>

#include "protoner/autodiff.hpp"

namespace protoner {

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Added to the gradient as l2 * param before the moment update.
  double l2 = 0.0;
};

struct AdamMoments {
  Tensor first;
  Tensor second;
  std::size_t steps = 0;
};

/// One Adam update of a single parameter from its current gradient.
/// Throws NumericError naming the parameter if the gradient is not finite.
void adam_step(Parameter& param, AdamMoments& moments, const AdamConfig& cfg);

/// Adam over a fixed parameter list. Each parameter may be registered once.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
};

}  // namespace protoner
