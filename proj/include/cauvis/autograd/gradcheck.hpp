#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "cauvis/autograd/tape.hpp"

namespace cauvis::ad {

// Builds a scalar loss on the given tape from the store's parameters.
using LossBuilder = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double ad_value = 0.0;
  double fd_value = 0.0;
};

inline double evaluate_loss(const LossBuilder& f, ParameterStore& params) {
  Tape tape(false);
  const double v = f(tape, params).value()(0, 0);
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss evaluated to non-finite value");
  return v;
}

// Reverse-mode gradient of f against central differences, coordinate by
// coordinate over every trainable parameter. Error per coordinate is
// |g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|).
inline GradCheckReport finite_diff_report(const LossBuilder& f, ParameterStore& params,
                                          double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_check: eps must be positive");
  params.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, params);
    if (!std::isfinite(loss.value()(0, 0)))
      throw NumericError("finite_diff_check: loss evaluated to non-finite value");
    tape.backward(loss);
  }
  GradCheckReport rep;
  for (auto& [id, p] : params) {
    if (!p.trainable) continue;
    const Matrix ad = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate_loss(f, params);
      x = saved - eps;
      const double down = evaluate_loss(f, params);
      x = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double g = ad.data()[i];
      const double err = std::abs(g - fd) / std::max(1e-8, std::abs(g) + std::abs(fd));
      if (rep.worst_param.empty() || err > rep.max_rel_error) rep = {err, id, i, g, fd};
    }
  }
  return rep;
}

inline double finite_diff_check(const LossBuilder& f, ParameterStore& params, double eps = 1e-5) {
  return finite_diff_report(f, params, eps).max_rel_error;
}

}  // namespace cauvis::ad
