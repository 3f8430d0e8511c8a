// grad_check.hpp — central-difference verification of tape gradients.
#pragma once

#include <functional>
#include <map>
#include <string>

#include "gvqa/tape.hpp"

namespace gvqa {

// Builds the scalar loss for the current parameter values. The callable must
// be deterministic (dropout disabled) and register parameters by name on the
// tape it is given.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckReport {
  // per-parameter max of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
  std::map<std::string, double> max_rel_error;
  double worst = 0.0;
};

inline GradCheckReport grad_check(const LossBuilder& build, ParamStore& params,
                                  double eps = 1e-5) {
  GradientMap analytic;
  {
    Tape tape;
    Var loss = build(tape, params);
    analytic = tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    Var loss = build(tape, params);
    return tape.value(loss).at(0);
  };
  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    double worst = 0.0;
    const Tensor* grad = nullptr;
    if (auto it = analytic.find(name); it != analytic.end()) grad = &it->second;
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      const double saved = tensor.data[i];
      tensor.data[i] = saved + eps;
      const double up = eval();
      tensor.data[i] = saved - eps;
      const double down = eval();
      tensor.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = grad ? grad->data[i] : 0.0;
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
    report.max_rel_error[name] = worst;
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace gvqa
