#pragma once

#include <cstdint>
#include <string>

#include "lbwm/nn/param_store.hpp"
#include "lbwm/nn/serialize.hpp"

namespace lbwm::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LaPropConfig {
  double lr = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-20;
};

// Moment buffers keyed by parameter name, created lazily on first step.
struct OptimizerState {
  TensorMap first;
  TensorMap second;
  std::int64_t step = 0;

  void save(BinaryWriter& w) const;
  static OptimizerState load(BinaryReader& r);
  bool operator==(const OptimizerState&) const;
};

// Both optimizers update every parameter whose name starts with `prefix`.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}, std::string prefix = "") : config_(config), prefix_(std::move(prefix)) {}
  void step(ParamStore& store);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  OptimizerState& state() { return state_; }
  const OptimizerState& state() const { return state_; }

 private:
  AdamConfig config_;
  std::string prefix_;
  OptimizerState state_;
};

// Momentum is applied to the gradient after it has been normalized by the
// second-moment estimate.
class LaProp {
 public:
  explicit LaProp(LaPropConfig config = {}, std::string prefix = "") : config_(config), prefix_(std::move(prefix)) {}
  void step(ParamStore& store);

  const LaPropConfig& config() const { return config_; }
  LaPropConfig& config() { return config_; }
  OptimizerState& state() { return state_; }
  const OptimizerState& state() const { return state_; }

 private:
  LaPropConfig config_;
  std::string prefix_;
  OptimizerState state_;
};

double global_grad_norm(const ParamStore& store, const std::string& prefix = "");
// Rescales all gradients under `prefix` so their joint norm is <= max_norm.
// Returns the norm before clipping.
double clip_global_norm(ParamStore& store, const std::string& prefix, double max_norm);

inline constexpr double kAgcEps = 1e-3;

// Adaptive clipping of one array: cap ||g|| at threshold * max(||theta||, eps).
Matrix agc_clip(const Matrix& param, const Matrix& grad, double threshold = 0.3, double eps = kAgcEps);
// Applies agc_clip per named array under `prefix`.
void agc_clip(ParamStore& store, const std::string& prefix, double threshold = 0.3, double eps = kAgcEps);

}  // namespace lbwm::nn
