#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "lbwm/agent.hpp"
#include "lbwm/nn/categorical.hpp"
#include "lbwm/nn/layers.hpp"
#include "lbwm/nn/optim.hpp"
#include "lbwm/replay.hpp"

namespace lbwm::wm {

using nn::Index;
using nn::Matrix;
using nn::Tape;
using nn::Var;

struct WmConfig {
  int deter_size = 256;
  int latent_groups = 16;
  int latent_classes = 16;
  int mlp_width = 256;
  int mlp_layers = 1;  // hidden layers per MLP
  double beta_pred = 1.0;
  double beta_dyn = 1.0;
  double beta_rep = 0.1;
  double free_nats = 1.0;
  double unimix = 0.01;
  int horizon = 15;
  double gamma = 1.0 - 1.0 / 333.0;
  double lambda = 0.95;
  double entropy_coef = 3e-4;
  double lr = 4e-5;
  double agc = 0.3;
  double laprop_eps = 1e-20;
  int policy_gru_units = 256;
  // Candidate activation of the policy GRU (and of the feedforward ablation layer).
  nn::Activation policy_gru_activation = nn::Activation::Tanh;
  bool feed_prev_action_reward = false;
  int batch_size = 16;
  int batch_length = 64;
  double train_ratio = 16.0;  // environment steps per train step
  bool symlog = true;
  bool persist_policy_state = false;
  bool critic_on_latent = false;
  bool recurrent_policy = true;  // false: feedforward layer instead of the policy GRU
  int imag_starts = 0;           // 0: imagine from every replayed step
  double return_ema_decay = 0.99;

  void validate() const;
  // 1 / (1 - gamma)
  double discount_horizon() const { return 1.0 / (1.0 - gamma); }
  bool operator==(const WmConfig&) const = default;
};

// Parameter layout: world model under "wm/", policy GRU and actor head under
// "actor/", critic head under "critic/".
class WmNets {
 public:
  WmNets(int obs_dim, int num_actions, const WmConfig& config, Rng& rng);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const WmConfig& config() const { return config_; }
  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return num_actions_; }
  Index latent_size() const { return static_cast<Index>(config_.latent_groups) * config_.latent_classes; }
  Index feat_size() const { return config_.deter_size + latent_size(); }
  Index policy_input_size() const;

  // Posterior logits from (h, transformed obs): B x G*C.
  Var encode_posterior(Tape& t, Var h, Var obs) const;
  // h' = gru(h, silu(W [z, a] + b)).
  Var sequence_step(Tape& t, Var h, Var z, Var action) const;
  Var dynamics_prior(Tape& t, Var h) const;

  struct Heads {
    Var recon;       // transformed obs space
    Var reward;      // transformed reward space
    Var cont_logit;  // continue probability = sigmoid(cont_logit)
  };
  Heads decode_heads(Tape& t, Var h, Var z) const;

  struct PolicyOut {
    Var h_pi;
    Var log_probs;  // unimix log-probabilities over actions
    Var probs;
    Var value;  // transformed value space
  };
  PolicyOut policy_step(Tape& t, Var h_pi, Var input) const;

 private:
  nn::ParamStore store_;
  WmConfig config_;
  int obs_dim_, num_actions_;
  nn::Mlp encoder_, prior_, decoder_, reward_head_, cont_head_;
  nn::Linear seq_in_;
  nn::GruCell seq_gru_;
  nn::GruCell policy_gru_;
  nn::Linear policy_ff_;
  nn::Mlp actor_head_, critic_head_;
};

// Rows of a B x G*C logit matrix as (B*G) x C unimix probabilities.
Var group_probs(Var logits, int groups, int classes, double unimix);
Matrix group_probs(const Matrix& logits, int groups, int classes, double unimix);
// Sum over groups of max(KL(post || prior), free), per batch row: (B*G) x C -> B x 1.
Var kl_free_bits(Var post, Var prior, int groups, double free_nats);

// Replay windows as per-time-step batch matrices.
struct SequenceBatch {
  Index batch = 0, length = 0;
  std::vector<Matrix> obs;          // transformed, B x obs_dim
  std::vector<Matrix> prev_action;  // one-hot, zero row when absent
  std::vector<Matrix> reward_raw;   // B x 1
  std::vector<Matrix> reward;       // transformed target
  std::vector<Matrix> cont;         // B x 1
  std::vector<Matrix> reset;        // B x 1; 1 where the recurrent state starts from zero
};
SequenceBatch make_batch(const ReplaySample& sample, int obs_dim, int num_actions, bool symlog);

struct WmLoss {
  Var total;
  double recon = 0, reward = 0, cont = 0, dyn = 0, rep = 0;  // means per step
  std::vector<Matrix> h, z;  // posterior states per step (values)
};
WmLoss world_model_loss(Tape& t, const WmNets& nets, const SequenceBatch& batch, nn::OneHotSampler& sampler);

// Imagination start points and the resulting rollout. Row i of every matrix
// belongs to start i.
struct ImagStart {
  Matrix h, z, h_pi, prev_action, prev_reward;
};
struct Imagined {
  std::vector<Matrix> h, z;               // H+1
  std::vector<Matrix> actions;            // H, one-hot
  std::vector<Matrix> rewards;            // H, raw scale; reward on entering state t+1
  std::vector<Matrix> conts;              // H, continue probability of state t+1
  Matrix h_pi0, prev_action0, prev_reward0;
  std::size_t horizon() const { return actions.size(); }
};
// Policy input for a latent state (plus previous action/reward when enabled).
Matrix policy_input(const WmNets& nets, const Matrix& h, const Matrix& z, const Matrix& prev_action,
                    const Matrix& prev_reward);
Imagined imagine(const WmNets& nets, const ImagStart& start, int horizon, nn::OneHotSampler& sampler);

// Starts from every step of a replayed batch; the policy state for step t is
// the GRU state after consuming steps before t of the same window.
ImagStart starts_from_replay(const WmNets& nets, const SequenceBatch& batch, const WmLoss& posterior);

// R_t = r_t + gamma c_t [(1 - lambda) v_{t+1} + lambda R_{t+1}], R_H = v_H.
// rewards/continues have H entries, values H+1. Output has H entries.
std::vector<double> lambda_returns(const std::vector<double>& rewards, const std::vector<double>& values,
                                   const std::vector<double>& continues, double gamma, double lambda);

struct AcTargets {
  std::vector<Matrix> returns;     // H, raw scale
  std::vector<Matrix> advantages;  // H, normalized
  std::vector<Matrix> weights;     // H, cumulative continue products
  double scale = 1.0;
};
// Values along the rollout under current parameters, as raw-scale values: H+1.
std::vector<Matrix> imagined_values(const WmNets& nets, const Imagined& traj);
AcTargets compute_targets(const WmNets& nets, const Imagined& traj, double return_scale);

// Spread of returns used for advantage normalization (95th - 5th percentile).
double return_spread(const std::vector<Matrix>& returns);

struct AcLoss {
  Var actor, critic;
  double entropy = 0;  // mean per step
};
AcLoss actor_critic_loss(Tape& t, const WmNets& nets, const Imagined& traj, const AcTargets& targets);

// Online latent and policy state while acting.
struct ActState {
  Matrix h, z, h_pi;
  int prev_action = -1;
  double prev_reward = 0.0;
};

class WmAgent final : public Agent {
 public:
  WmAgent(int num_servers, WmConfig config, std::uint64_t seed, std::size_t replay_capacity = 100000);

  std::string kind() const override { return "wm"; }
  int num_actions() const override { return nets_.num_actions(); }
  void begin_episode(Mode mode) override;
  int act(const sim::Observation& obs, Mode mode, Rng& rng) override;
  void observe(const sim::Observation& obs, int action, double reward, const sim::Observation& next_obs, bool done,
               Mode mode) override;
  // Snapshot for evaluation: same parameters and optimizer state, empty replay.
  std::unique_ptr<Agent> clone() const override;
  std::uint64_t param_checksum() const override { return nets_.params().checksum(); }
  Diagnostics last_diagnostics() const override { return diagnostics_; }
  void save_state(nn::BinaryWriter& w) const override;
  void load_state(nn::BinaryReader& r) override;

  // One update from a replay window batch; std::nullopt when replay is short.
  std::optional<Diagnostics> train_step();
  Diagnostics train_on(const ReplaySample& sample);
  // World-model update only (no imagination or actor-critic step).
  Diagnostics train_world_model(const ReplaySample& sample);

  // Action distribution for an observation from the current state, without advancing it.
  std::vector<double> action_probs(const sim::Observation& obs) const;

  WmNets& nets() { return nets_; }
  const WmNets& nets() const { return nets_; }
  const WmConfig& config() const { return nets_.config(); }
  ReplayBuffer& replay() { return *replay_; }
  const ActState& state() const { return state_; }
  ActState& state() { return state_; }
  std::int64_t train_steps() const { return train_steps_; }
  double return_scale() const { return std::max(1.0, return_spread_ema_); }

 private:
  std::vector<double> transform_obs(const sim::Observation& obs) const;
  void record(const sim::Observation& obs, int prev_action, double reward, double cont, bool first);
  WmLoss world_model_step(const SequenceBatch& batch, Diagnostics& d);
  void check_finite(Diagnostics d);

  WmNets nets_;
  nn::LaProp wm_opt_, actor_opt_, critic_opt_;
  std::shared_ptr<ReplayBuffer> replay_;
  Rng train_rng_;
  ActState state_;
  bool episode_open_ = false;
  double pending_steps_ = 0.0;
  double return_spread_ema_ = 0.0;
  bool spread_initialized_ = false;
  std::int64_t train_steps_ = 0;
  Diagnostics diagnostics_;
};

}  // namespace lbwm::wm
