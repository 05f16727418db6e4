#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "protoner/autodiff.hpp"

namespace protoner::testing {

struct GradCheck {
  bool ok = true;
  std::size_t checked = 0;
  double worst_abs = 0.0;
  std::string first_failure;
};

/// Central differences of a scalar loss against every entry of the given
/// parameters. The loss must be a deterministic function of the parameters.
inline GradCheck check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& loss,
                                 double rtol = 1e-4, double atol = 1e-6, double h = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape(Mode::train);
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape tape(Mode::train, false);
    return loss(tape).value().item();
  };
  GradCheck out;
  for (Parameter* p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval();
      p->value[i] = orig - h;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i];
      const double err = std::abs(a - numeric);
      out.worst_abs = std::max(out.worst_abs, err);
      ++out.checked;
      if (err > atol + rtol * std::max(std::abs(a), std::abs(numeric))) {
        if (out.ok) {
          out.first_failure = p->name + "[" + std::to_string(i) + "]: analytic " + std::to_string(a) +
                              ", numeric " + std::to_string(numeric);
        }
        out.ok = false;
      }
    }
  }
  return out;
}

}  // namespace protoner::testing
