#pragma once

// Random A2C loss instances for the finite-difference oracle. Biases are
// randomised and inputs resampled until every trunk pre-activation clears
// the ReLU kink by `kKinkMargin`, so central differences are well defined.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lbwm/a2c.hpp"

namespace lbwm::testing {

struct A2cCase {
  a2c::A2cNet net;
  a2c::RolloutBuffer buffer;
  std::vector<double> returns, advantages;
};

inline constexpr double kKinkMargin = 1e-3;

inline double trunk_kink_distance(const a2c::A2cNet& net, const a2c::RolloutBuffer& b) {
  const nn::TensorMap p = net.params().values();
  const auto n = static_cast<nn::Index>(b.size());
  nn::Matrix x(n, net.obs_dim());
  for (nn::Index i = 0; i < n; ++i)
    for (nn::Index j = 0; j < x.cols(); ++j) x(i, j) = b.obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const nn::Matrix z1 = (x * p.at("a2c/trunk/fc1/w")).rowwise() + p.at("a2c/trunk/fc1/b").row(0);
  const nn::Matrix z2 = (z1.cwiseMax(0.0) * p.at("a2c/trunk/fc2/w")).rowwise() + p.at("a2c/trunk/fc2/b").row(0);
  return std::min(z1.cwiseAbs().minCoeff(), z2.cwiseAbs().minCoeff());
}

inline A2cCase make_a2c_case(std::uint64_t seed, int obs_dim = 6, int actions = 4, int hidden = 8, int steps = 7) {
  Rng rng(seed);
  a2c::A2cNet net(obs_dim, actions, hidden, rng);
  for (auto& [name, e] : net.params())
    if (name.ends_with("/b"))
      for (nn::Index q = 0; q < e.value.size(); ++q) e.value.data()[q] = rng.uniform(-0.5, 0.5);
  while (true) {
    A2cCase c{net, {}, {}, {}};
    for (int j = 0; j < steps; ++j) {
      c.buffer.obs.push_back({});
      for (int k = 0; k < obs_dim; ++k) c.buffer.obs.back().push_back(rng.uniform(-2, 2));
      c.buffer.actions.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(actions))));
      c.buffer.rewards.push_back(rng.uniform(-3, 0));
      c.buffer.values.push_back(rng.uniform(-2, 2));
      c.returns.push_back(rng.uniform(-3, 3));
      c.advantages.push_back(rng.uniform(-2, 2));
    }
    if (trunk_kink_distance(c.net, c.buffer) >= kKinkMargin) return c;
  }
}

}  // namespace lbwm::testing
