#pragma once

// Central finite-difference oracle for gradients of a scalar loss with
// respect to every array in a ParamStore.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lbwm/nn/param_store.hpp"
#include "lbwm/nn/tape.hpp"

namespace lbwm::testing {

using LossBuilder = std::function<nn::Var(nn::Tape&)>;

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Only arrays whose name starts with `prefix` are perturbed. Stop-gradient
// outputs are held at their unperturbed values, matching what the reverse
// sweep differentiates.
inline GradCheck check_gradients(nn::ParamStore& store, const LossBuilder& build, const std::string& prefix = "",
                                 double step = 1e-5) {
  store.zero_grad();
  std::vector<nn::Matrix> frozen;
  {
    nn::Tape tape(store);
    tape.record_stop_gradients(&frozen);
    nn::Var loss = build(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    nn::Tape tape(store, false);
    tape.replay_stop_gradients(&frozen);
    return build(tape).scalar();
  };
  double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
  for (auto& [name, e] : store) {
    if (!nn::has_prefix(name, prefix)) continue;
    for (nn::Index i = 0; i < e.value.size(); ++i) {
      double& x = e.value.data()[i];
      const double keep = x;
      x = keep + step;
      const double up = eval();
      x = keep - step;
      const double down = eval();
      x = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = e.grad.data()[i];
      diff_sq += (analytic - numeric) * (analytic - numeric);
      a_sq += analytic * analytic;
      n_sq += numeric * numeric;
    }
  }
  GradCheck out;
  out.analytic_norm = std::sqrt(a_sq);
  out.numeric_norm = std::sqrt(n_sq);
  const double denom = std::max({out.analytic_norm, out.numeric_norm, 1e-12});
  out.rel_error = std::sqrt(diff_sq) / denom;
  return out;
}

}  // namespace lbwm::testing
