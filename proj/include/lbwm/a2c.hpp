#pragma once

#include <vector>

#include "lbwm/agent.hpp"
#include "lbwm/nn/layers.hpp"
#include "lbwm/nn/optim.hpp"
#include "lbwm/normalizer.hpp"

namespace lbwm::a2c {

struct A2cConfig {
  int hidden = 256;
  double lr = 1e-3;
  double gamma = 0.99;
  int rollout = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double clip_norm = 0.5;
  // Multiplies environment rewards before they enter returns.
  double reward_scale = 1e-3;
  bool normalize_obs = true;
  // Divide rewards by the running std of the discounted return.
  bool normalize_reward = true;

  void validate() const;
};

// Shared two-layer ReLU trunk with a softmax actor head and a scalar critic.
class A2cNet {
 public:
  A2cNet(int obs_dim, int num_actions, int hidden, Rng& rng);

  struct Output {
    nn::Var log_probs;  // T x k
    nn::Var probs;      // T x k
    nn::Var value;      // T x 1
  };
  Output forward(nn::Tape& t, nn::Var obs) const;

  // Single observation, no tape bookkeeping.
  std::pair<std::vector<double>, double> evaluate(const std::vector<double>& obs) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return num_actions_; }

 private:
  nn::ParamStore store_;
  nn::Linear fc1_, fc2_, actor_, critic_;
  int obs_dim_;
  int num_actions_;
};

struct RolloutBuffer {
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> values;
  double bootstrap = 0.0;

  std::size_t size() const { return actions.size(); }
  void clear();
};

// R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value.
std::vector<double> compute_returns(const std::vector<double>& rewards, double bootstrap, double gamma);
// A_t = R_t - V_t
std::vector<double> advantage(const std::vector<double>& returns, const std::vector<double>& values);

struct LossTerms {
  nn::Var total;
  nn::Var policy;
  nn::Var value;
  nn::Var entropy;  // summed entropy (not yet weighted)
};

// L = -sum A log pi(a|s) + c_v sum (R - V)^2 - c_e sum H(pi). Returns and
// advantages enter as constants.
LossTerms a2c_loss(nn::Tape& t, const A2cNet& net, const RolloutBuffer& buffer, const std::vector<double>& returns,
                   const std::vector<double>& advantages, const A2cConfig& config);

class A2cAgent final : public Agent {
 public:
  A2cAgent(int num_servers, A2cConfig config, std::uint64_t seed);

  std::string kind() const override { return "a2c"; }
  int num_actions() const override { return net_.num_actions(); }
  void begin_episode(Mode mode) override;
  int act(const sim::Observation& obs, Mode mode, Rng& rng) override;
  void observe(const sim::Observation& obs, int action, double reward, const sim::Observation& next_obs, bool done,
               Mode mode) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<A2cAgent>(*this); }
  std::uint64_t param_checksum() const override { return net_.params().checksum(); }
  Diagnostics last_diagnostics() const override { return diagnostics_; }
  void save_state(nn::BinaryWriter& w) const override;
  void load_state(nn::BinaryReader& r) override;

  // Policy/value for one raw observation (normalized with frozen stats).
  std::pair<std::vector<double>, double> forward(const sim::Observation& obs) const;
  // One Adam step on the current buffer, then clears it.
  Diagnostics update();

  A2cNet& net() { return net_; }
  const A2cNet& net() const { return net_; }
  RolloutBuffer& buffer() { return buffer_; }
  const A2cConfig& config() const { return config_; }
  std::int64_t updates() const { return updates_; }

 private:
  std::vector<double> prepare(const sim::Observation& obs) const;
  double shape_reward(double reward, bool done);

  A2cConfig config_;
  A2cNet net_;
  nn::Adam optimizer_;
  RunningNormalizer normalizer_;
  RunningNormalizer return_stats_{1};
  double running_return_ = 0.0;
  RolloutBuffer buffer_;
  std::vector<double> pending_obs_;
  double pending_value_ = 0.0;
  Diagnostics diagnostics_;
  std::int64_t updates_ = 0;
};

}  // namespace lbwm::a2c
