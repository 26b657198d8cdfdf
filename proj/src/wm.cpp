#include "lbwm/wm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lbwm::wm {

void WmConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("wm config: " + msg); };
  if (deter_size < 1 || latent_groups < 1 || latent_classes < 2 || mlp_width < 1 || mlp_layers < 0)
    fail("network sizes must be positive (latent_classes >= 2)");
  if (policy_gru_units < 1) fail("policy_gru_units must be >= 1");
  if (policy_gru_activation != nn::Activation::Tanh && policy_gru_activation != nn::Activation::Silu)
    fail("policy_gru_activation must be tanh or silu");
  if (beta_pred < 0 || beta_dyn < 0 || beta_rep < 0 || free_nats < 0 || entropy_coef < 0 || lr < 0)
    fail("loss scales and lr must be >= 0");
  if (!(unimix >= 0 && unimix < 1)) fail("unimix must lie in [0, 1)");
  if (!(gamma > 0 && gamma < 1)) fail("gamma must lie in (0, 1)");
  if (!(lambda >= 0 && lambda <= 1)) fail("lambda must lie in [0, 1]");
  if (horizon < 0) fail("horizon must be >= 0");
  if (batch_size < 1 || batch_length < 1) fail("batch size and length must be >= 1");
  if (!(train_ratio > 0)) fail("train_ratio must be > 0");
  if (!(agc > 0) || !(laprop_eps >= 0)) fail("agc must be > 0 and laprop_eps >= 0");
  if (imag_starts < 0) fail("imag_starts must be >= 0");
  if (!(return_ema_decay >= 0 && return_ema_decay < 1)) fail("return_ema_decay must lie in [0, 1)");
}

namespace {

std::vector<Index> hidden(const WmConfig& c) { return std::vector<Index>(static_cast<std::size_t>(c.mlp_layers), c.mlp_width); }

}  // namespace

WmNets::WmNets(int obs_dim, int num_actions, const WmConfig& config, Rng& rng)
    : config_(config), obs_dim_(obs_dim), num_actions_(num_actions) {
  config_.validate();
  const auto hid = hidden(config_);
  const Index deter = config_.deter_size;
  const Index lat = latent_size();
  const Index feat = feat_size();
  using nn::Activation;
  encoder_ = nn::Mlp(store_, "wm/enc", deter + obs_dim, hid, lat, Activation::Silu, rng);
  prior_ = nn::Mlp(store_, "wm/prior", deter, hid, lat, Activation::Silu, rng);
  seq_in_ = nn::Linear(store_, "wm/seq_in", lat + num_actions, config_.mlp_width, rng);
  seq_gru_ = nn::GruCell(store_, "wm/gru", config_.mlp_width, deter, rng);
  decoder_ = nn::Mlp(store_, "wm/dec", feat, hid, obs_dim, Activation::Silu, rng);
  reward_head_ = nn::Mlp(store_, "wm/rew", feat, hid, 1, Activation::Silu, rng, true);
  cont_head_ = nn::Mlp(store_, "wm/cont", feat, hid, 1, Activation::Silu, rng);
  const Index units = config_.policy_gru_units;
  if (config_.recurrent_policy) {
    policy_gru_ = nn::GruCell(store_, "actor/gru", policy_input_size(), units, rng, config_.policy_gru_activation);
  } else {
    policy_ff_ = nn::Linear(store_, "actor/ff", policy_input_size(), units, rng);
  }
  actor_head_ = nn::Mlp(store_, "actor/head", units, hid, num_actions, Activation::Silu, rng);
  critic_head_ = nn::Mlp(store_, "critic/head", config_.critic_on_latent ? policy_input_size() : units, hid, 1,
                         Activation::Silu, rng, true);
}

Index WmNets::policy_input_size() const {
  return feat_size() + (config_.feed_prev_action_reward ? num_actions_ + 1 : 0);
}

Var WmNets::encode_posterior(Tape& t, Var h, Var obs) const { return encoder_(t, nn::concat_cols({h, obs})); }

Var WmNets::sequence_step(Tape& t, Var h, Var z, Var action) const {
  Var x = nn::silu(seq_in_(t, nn::concat_cols({z, action})));
  return seq_gru_(t, h, x);
}

Var WmNets::dynamics_prior(Tape& t, Var h) const { return prior_(t, h); }

WmNets::Heads WmNets::decode_heads(Tape& t, Var h, Var z) const {
  Var feat = nn::concat_cols({h, z});
  return {decoder_(t, feat), reward_head_(t, feat), cont_head_(t, feat)};
}

WmNets::PolicyOut WmNets::policy_step(Tape& t, Var h_pi, Var input) const {
  PolicyOut out;
  out.h_pi = config_.recurrent_policy ? policy_gru_(t, h_pi, input)
                                      : nn::activate(policy_ff_(t, input), config_.policy_gru_activation);
  out.probs = nn::unimix_probs(actor_head_(t, out.h_pi), config_.unimix);
  out.log_probs = nn::log(out.probs);
  out.value = critic_head_(t, config_.critic_on_latent ? input : nn::stop_gradient(out.h_pi));
  return out;
}

// ---------------------------------------------------------------------------

Var group_probs(Var logits, int groups, int classes, double unimix) {
  return nn::unimix_probs(nn::reshape(logits, logits.rows() * groups, classes), unimix);
}

Matrix group_probs(const Matrix& logits, int groups, int classes, double unimix) {
  Tape t(false);
  return group_probs(t.constant(logits), groups, classes, unimix).value();
}

Var kl_free_bits(Var post, Var prior, int groups, double free_nats) {
  Var kl = nn::clamp_min(nn::kl_rows(post, prior), free_nats);
  return nn::sum_cols(nn::reshape(kl, kl.rows() / groups, groups));
}

namespace {

double transform(double x, bool symlog) { return symlog ? nn::symlog(x) : x; }

// Symlog predictions are decoded from [-20, 20], the usual two-hot support, so
// heads extrapolating on imagined states cannot overflow the returns.
constexpr double kSymlogBound = 20.0;

Matrix untransform(const Matrix& m, bool symlog) {
  return symlog ? nn::symexp(Matrix(m.cwiseMax(-kSymlogBound).cwiseMin(kSymlogBound))) : m;
}

}  // namespace

SequenceBatch make_batch(const ReplaySample& sample, int obs_dim, int num_actions, bool symlog) {
  SequenceBatch b;
  b.batch = static_cast<Index>(sample.batch());
  b.length = static_cast<Index>(sample.length());
  for (Index t = 0; t < b.length; ++t) {
    Matrix obs(b.batch, obs_dim);
    Matrix act = Matrix::Zero(b.batch, num_actions);
    Matrix rr(b.batch, 1), r(b.batch, 1), c(b.batch, 1), reset(b.batch, 1);
    for (Index i = 0; i < b.batch; ++i) {
      const ReplayStep& s = sample.windows[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
      if (static_cast<int>(s.obs.size()) != obs_dim)
        throw std::invalid_argument("make_batch: observation has " + std::to_string(s.obs.size()) +
                                    " entries, expected " + std::to_string(obs_dim));
      for (int j = 0; j < obs_dim; ++j) obs(i, j) = transform(s.obs[static_cast<std::size_t>(j)], symlog);
      if (s.prev_action >= num_actions) throw std::invalid_argument("make_batch: action out of range");
      if (s.prev_action >= 0) act(i, s.prev_action) = 1.0;
      rr(i, 0) = s.reward;
      r(i, 0) = transform(s.reward, symlog);
      c(i, 0) = s.cont;
      reset(i, 0) = (t == 0 || s.first) ? 1.0 : 0.0;
    }
    b.obs.push_back(std::move(obs));
    b.prev_action.push_back(std::move(act));
    b.reward_raw.push_back(std::move(rr));
    b.reward.push_back(std::move(r));
    b.cont.push_back(std::move(c));
    b.reset.push_back(std::move(reset));
  }
  return b;
}

WmLoss world_model_loss(Tape& t, const WmNets& nets, const SequenceBatch& batch, nn::OneHotSampler& sampler) {
  const WmConfig& cfg = nets.config();
  const int G = cfg.latent_groups, C = cfg.latent_classes;
  const Index B = batch.batch;
  if (batch.length < 1 || B < 1) throw std::invalid_argument("world_model_loss: empty batch");
  WmLoss out;
  Var h, z;
  Var recon_sum, rew_sum, cont_sum, dyn_sum, rep_sum;
  auto acc = [](Var& total, Var term) { total = total.valid() ? nn::add(total, term) : term; };
  for (Index s = 0; s < batch.length; ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (s == 0) {
      h = t.constant(Matrix::Zero(B, cfg.deter_size));
    } else {
      h = nets.sequence_step(t, h, z, t.constant(batch.prev_action[i]));
      if (batch.reset[i].any()) h = nn::mul(h, t.constant((1.0 - batch.reset[i].array()).matrix()));
    }
    Var post = group_probs(nets.encode_posterior(t, h, t.constant(batch.obs[i])), G, C, cfg.unimix);
    Var prior = group_probs(nets.dynamics_prior(t, h), G, C, cfg.unimix);
    z = nn::reshape(nn::straight_through(sampler.draw(post.value()), post), B, nets.latent_size());
    WmNets::Heads heads = nets.decode_heads(t, h, z);
    acc(recon_sum, nn::sum(nn::square(nn::sub(heads.recon, t.constant(batch.obs[i])))));
    acc(rew_sum, nn::sum(nn::square(nn::sub(heads.reward, t.constant(batch.reward[i])))));
    acc(cont_sum,
        nn::sum(nn::sub(nn::softplus(heads.cont_logit), nn::mul(heads.cont_logit, t.constant(batch.cont[i])))));
    acc(dyn_sum, nn::sum(kl_free_bits(nn::stop_gradient(post), prior, G, cfg.free_nats)));
    acc(rep_sum, nn::sum(kl_free_bits(post, nn::stop_gradient(prior), G, cfg.free_nats)));
    out.h.push_back(h.value());
    out.z.push_back(z.value());
  }
  const double n = static_cast<double>(B * batch.length);
  Var pred = nn::add(nn::add(recon_sum, rew_sum), cont_sum);
  out.total = nn::scale(nn::add(nn::add(nn::scale(pred, cfg.beta_pred), nn::scale(dyn_sum, cfg.beta_dyn)),
                                nn::scale(rep_sum, cfg.beta_rep)),
                        1.0 / n);
  out.recon = recon_sum.scalar() / n;
  out.reward = rew_sum.scalar() / n;
  out.cont = cont_sum.scalar() / n;
  out.dyn = dyn_sum.scalar() / n;
  out.rep = rep_sum.scalar() / n;
  return out;
}

// ---------------------------------------------------------------------------

Matrix policy_input(const WmNets& nets, const Matrix& h, const Matrix& z, const Matrix& prev_action,
                    const Matrix& prev_reward) {
  const bool extra = nets.config().feed_prev_action_reward;
  Matrix in(h.rows(), nets.policy_input_size());
  in.leftCols(h.cols()) = h;
  in.middleCols(h.cols(), z.cols()) = z;
  if (extra) {
    in.middleCols(h.cols() + z.cols(), prev_action.cols()) = prev_action;
    in.rightCols(1) = nets.config().symlog ? nn::symlog(prev_reward) : prev_reward;
  }
  return in;
}

Imagined imagine(const WmNets& nets, const ImagStart& start, int horizon, nn::OneHotSampler& sampler) {
  if (horizon < 0) throw std::invalid_argument("imagine: negative horizon");
  const WmConfig& cfg = nets.config();
  const Index N = start.h.rows();
  Imagined out;
  out.h.push_back(start.h);
  out.z.push_back(start.z);
  out.h_pi0 = start.h_pi;
  out.prev_action0 = start.prev_action;
  out.prev_reward0 = start.prev_reward;
  Matrix h_pi = start.h_pi, prev_a = start.prev_action, prev_r = start.prev_reward;
  for (int s = 0; s < horizon; ++s) {
    Tape t(nets.params());
    const Matrix& h = out.h.back();
    const Matrix& z = out.z.back();
    WmNets::PolicyOut po =
        nets.policy_step(t, t.constant(h_pi), t.constant(policy_input(nets, h, z, prev_a, prev_r)));
    Matrix a = sampler.draw(po.probs.value());
    Var h_next = nets.sequence_step(t, t.constant(h), t.constant(z), t.constant(a));
    Matrix prior = group_probs(nets.dynamics_prior(t, h_next).value(), cfg.latent_groups, cfg.latent_classes,
                               cfg.unimix);
    Matrix z_next = sampler.draw(prior).reshaped<Eigen::RowMajor>(N, nets.latent_size());
    WmNets::Heads heads = nets.decode_heads(t, h_next, t.constant(z_next));
    Matrix r = untransform(heads.reward.value(), cfg.symlog);
    Matrix c = nn::sigmoid(heads.cont_logit).value();
    h_pi = po.h_pi.value();
    prev_a = a;
    prev_r = r;
    out.actions.push_back(std::move(a));
    out.rewards.push_back(std::move(r));
    out.conts.push_back(std::move(c));
    out.h.push_back(h_next.value());
    out.z.push_back(std::move(z_next));
  }
  return out;
}

ImagStart starts_from_replay(const WmNets& nets, const SequenceBatch& batch, const WmLoss& posterior) {
  const Index B = batch.batch, L = batch.length;
  const Index N = B * L;
  ImagStart st;
  st.h.resize(N, nets.config().deter_size);
  st.z.resize(N, nets.latent_size());
  st.h_pi.resize(N, nets.config().policy_gru_units);
  st.prev_action.resize(N, nets.num_actions());
  st.prev_reward.resize(N, 1);
  Matrix h_pi = Matrix::Zero(B, nets.config().policy_gru_units);
  for (Index s = 0; s < L; ++s) {
    const auto i = static_cast<std::size_t>(s);
    for (Index b = 0; b < B; ++b)
      if (batch.reset[i](b, 0) != 0.0) h_pi.row(b).setZero();
    for (Index b = 0; b < B; ++b) {
      const Index row = b * L + s;
      st.h.row(row) = posterior.h[i].row(b);
      st.z.row(row) = posterior.z[i].row(b);
      st.h_pi.row(row) = h_pi.row(b);
      st.prev_action.row(row) = batch.prev_action[i].row(b);
      st.prev_reward(row, 0) = batch.reward_raw[i](b, 0);
    }
    Tape t(nets.params());
    Matrix in = policy_input(nets, posterior.h[i], posterior.z[i], batch.prev_action[i], batch.reward_raw[i]);
    h_pi = nets.policy_step(t, t.constant(h_pi), t.constant(in)).h_pi.value();
  }
  return st;
}

// ---------------------------------------------------------------------------

std::vector<double> lambda_returns(const std::vector<double>& rewards, const std::vector<double>& values,
                                   const std::vector<double>& continues, double gamma, double lambda) {
  const std::size_t H = rewards.size();
  if (continues.size() != H || values.size() != H + 1)
    throw std::invalid_argument("lambda_returns: need H rewards/continues and H+1 values, got " +
                                std::to_string(H) + "/" + std::to_string(continues.size()) + " and " +
                                std::to_string(values.size()));
  std::vector<double> out(H);
  double next = values[H];
  for (std::size_t i = H; i-- > 0;) {
    next = rewards[i] + gamma * continues[i] * ((1.0 - lambda) * values[i + 1] + lambda * next);
    out[i] = next;
  }
  return out;
}

std::vector<Matrix> imagined_values(const WmNets& nets, const Imagined& traj) {
  const bool sl = nets.config().symlog;
  std::vector<Matrix> values;
  Matrix h_pi = traj.h_pi0;
  for (std::size_t s = 0; s < traj.h.size(); ++s) {
    const Matrix& pa = s == 0 ? traj.prev_action0 : traj.actions[s - 1];
    const Matrix& pr = s == 0 ? traj.prev_reward0 : traj.rewards[s - 1];
    Tape t(nets.params());
    WmNets::PolicyOut po =
        nets.policy_step(t, t.constant(h_pi), t.constant(policy_input(nets, traj.h[s], traj.z[s], pa, pr)));
    h_pi = po.h_pi.value();
    values.push_back(untransform(po.value.value(), sl));
  }
  return values;
}

AcTargets compute_targets(const WmNets& nets, const Imagined& traj, double return_scale) {
  const WmConfig& cfg = nets.config();
  const std::size_t H = traj.horizon();
  const auto values = imagined_values(nets, traj);
  AcTargets out;
  out.scale = std::max(1.0, return_scale);
  out.returns.resize(H);
  out.advantages.resize(H);
  out.weights.resize(H);
  Matrix next = values[H];
  for (std::size_t i = H; i-- > 0;) {
    next = (traj.rewards[i].array() +
            cfg.gamma * traj.conts[i].array() * ((1.0 - cfg.lambda) * values[i + 1].array() + cfg.lambda * next.array()))
               .matrix();
    out.returns[i] = next;
    out.advantages[i] = (next - values[i]) / out.scale;
  }
  for (std::size_t i = 0; i < H; ++i)
    out.weights[i] = i == 0 ? Matrix::Ones(traj.h[0].rows(), 1)
                            : Matrix(out.weights[i - 1].cwiseProduct(traj.conts[i - 1]));
  return out;
}

double return_spread(const std::vector<Matrix>& returns) {
  std::vector<double> all;
  for (const auto& m : returns) all.insert(all.end(), m.data(), m.data() + m.size());
  if (all.empty()) return 0.0;
  std::sort(all.begin(), all.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(all.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, all.size() - 1);
    return all[lo] + (pos - static_cast<double>(lo)) * (all[hi] - all[lo]);
  };
  return quantile(0.95) - quantile(0.05);
}

AcLoss actor_critic_loss(Tape& t, const WmNets& nets, const Imagined& traj, const AcTargets& targets) {
  const WmConfig& cfg = nets.config();
  const std::size_t H = traj.horizon();
  AcLoss out;
  if (H == 0) {
    out.actor = t.constant(Matrix::Zero(1, 1));
    out.critic = t.constant(Matrix::Zero(1, 1));
    return out;
  }
  const double n = static_cast<double>(traj.h[0].rows() * static_cast<Index>(H));
  Var h_pi = t.constant(traj.h_pi0);
  Var actor, critic;
  double entropy = 0.0;
  for (std::size_t s = 0; s < H; ++s) {
    const Matrix& pa = s == 0 ? traj.prev_action0 : traj.actions[s - 1];
    const Matrix& pr = s == 0 ? traj.prev_reward0 : traj.rewards[s - 1];
    WmNets::PolicyOut po =
        nets.policy_step(t, h_pi, t.constant(policy_input(nets, traj.h[s], traj.z[s], pa, pr)));
    h_pi = po.h_pi;
    Var w = t.constant(targets.weights[s]);
    Var logp_a = nn::sum_cols(nn::mul(po.log_probs, t.constant(traj.actions[s])));
    Var ent = nn::neg(nn::sum_cols(nn::mul(po.probs, po.log_probs)));
    Var objective =
        nn::add(nn::mul(logp_a, t.constant(targets.advantages[s])), nn::scale(ent, cfg.entropy_coef));
    Var a_term = nn::neg(nn::sum(nn::mul(objective, w)));
    const Matrix target = cfg.symlog ? nn::symlog(targets.returns[s]) : targets.returns[s];
    Var c_term = nn::sum(nn::mul(nn::square(nn::sub(po.value, t.constant(target))), w));
    actor = actor.valid() ? nn::add(actor, a_term) : a_term;
    critic = critic.valid() ? nn::add(critic, c_term) : c_term;
    entropy += ent.value().sum();
  }
  out.actor = nn::scale(actor, 1.0 / n);
  out.critic = nn::scale(critic, 1.0 / n);
  out.entropy = entropy / n;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

nn::LaPropConfig laprop(const WmConfig& c) { return nn::LaPropConfig{c.lr, 0.9, 0.999, c.laprop_eps}; }

Rng init_rng(std::uint64_t seed) { return Rng(derive_seed(seed, 0, 0x3e11)); }

WmNets build(int num_servers, const WmConfig& config, std::uint64_t seed) {
  Rng rng = init_rng(seed);
  return WmNets(num_servers + 1, num_servers, config, rng);
}

Matrix row(const std::vector<double>& v) {
  Matrix m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return m;
}

int pick(const Matrix& probs, Mode mode, Rng& rng) {
  return nn::onehot_indices(mode == Mode::Train ? nn::sample_onehot(rng, probs) : nn::argmax_onehot(probs))[0];
}

}  // namespace

WmAgent::WmAgent(int num_servers, WmConfig config, std::uint64_t seed, std::size_t replay_capacity)
    : nets_(build(num_servers, config, seed)),
      wm_opt_(laprop(config), "wm/"),
      actor_opt_(laprop(config), "actor/"),
      critic_opt_(laprop(config), "critic/"),
      replay_(std::make_shared<ReplayBuffer>(replay_capacity)),
      train_rng_(derive_seed(seed, 1, 0x3e11)) {
  begin_episode(Mode::Train);
}

std::unique_ptr<Agent> WmAgent::clone() const {
  auto copy = std::make_unique<WmAgent>(*this);
  copy->replay_ = std::make_shared<ReplayBuffer>(replay_->capacity());
  return copy;
}

std::vector<double> WmAgent::transform_obs(const sim::Observation& obs) const {
  std::vector<double> x = obs.flatten();
  if (static_cast<int>(x.size()) != nets_.obs_dim())
    throw std::invalid_argument("WmAgent: observation has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(nets_.obs_dim()));
  if (config().symlog)
    for (double& v : x) v = nn::symlog(v);
  return x;
}

void WmAgent::begin_episode(Mode) {
  const WmConfig& c = config();
  const bool keep = c.persist_policy_state && state_.h_pi.size() == c.policy_gru_units;
  Matrix h_pi = keep ? state_.h_pi : Matrix::Zero(1, c.policy_gru_units);
  state_ = ActState{Matrix::Zero(1, c.deter_size), Matrix::Zero(1, nets_.latent_size()), std::move(h_pi), -1, 0.0};
  episode_open_ = false;
}

void WmAgent::record(const sim::Observation& obs, int prev_action, double reward, double cont, bool first) {
  replay_->append(ReplayStep{obs.flatten(), prev_action, reward, cont, first});
}

int WmAgent::act(const sim::Observation& obs, Mode mode, Rng& rng) {
  const WmConfig& c = config();
  if (mode == Mode::Train) {
    if (episode_open_) {
      record(obs, state_.prev_action, state_.prev_reward, 1.0, false);
    } else {
      record(obs, -1, 0.0, 1.0, true);
    }
  }
  episode_open_ = true;
  Tape t(nets_.params());
  Var h = t.constant(state_.h);
  Matrix post = group_probs(nets_.encode_posterior(t, h, t.constant(row(transform_obs(obs)))).value(),
                            c.latent_groups, c.latent_classes, c.unimix);
  Matrix z = (mode == Mode::Train ? nn::sample_onehot(rng, post) : nn::argmax_onehot(post))
                 .reshaped<Eigen::RowMajor>(1, nets_.latent_size());
  Matrix prev_a = Matrix::Zero(1, nets_.num_actions());
  if (state_.prev_action >= 0) prev_a(0, state_.prev_action) = 1.0;
  Matrix prev_r = Matrix::Constant(1, 1, state_.prev_reward);
  WmNets::PolicyOut po =
      nets_.policy_step(t, t.constant(state_.h_pi), t.constant(policy_input(nets_, state_.h, z, prev_a, prev_r)));
  const int action = pick(po.probs.value(), mode, rng);
  Matrix a = Matrix::Zero(1, nets_.num_actions());
  a(0, action) = 1.0;
  state_.h_pi = po.h_pi.value();
  state_.h = nets_.sequence_step(t, h, t.constant(z), t.constant(a)).value();
  state_.z = std::move(z);
  state_.prev_action = action;
  return action;
}

std::vector<double> WmAgent::action_probs(const sim::Observation& obs) const {
  const WmConfig& c = config();
  Tape t(nets_.params());
  Matrix post = group_probs(nets_.encode_posterior(t, t.constant(state_.h), t.constant(row(transform_obs(obs)))).value(),
                            c.latent_groups, c.latent_classes, c.unimix);
  Matrix z = nn::argmax_onehot(post).reshaped<Eigen::RowMajor>(1, nets_.latent_size());
  Matrix prev_a = Matrix::Zero(1, nets_.num_actions());
  if (state_.prev_action >= 0) prev_a(0, state_.prev_action) = 1.0;
  Matrix prev_r = Matrix::Constant(1, 1, state_.prev_reward);
  Matrix p = nets_.policy_step(t, t.constant(state_.h_pi), t.constant(policy_input(nets_, state_.h, z, prev_a, prev_r)))
                 .probs.value();
  return std::vector<double>(p.data(), p.data() + p.size());
}

void WmAgent::observe(const sim::Observation&, int action, double reward, const sim::Observation& next_obs,
                      bool done, Mode mode) {
  state_.prev_reward = reward;
  if (mode != Mode::Train) return;
  if (done) record(next_obs, action, reward, 0.0, false);
  pending_steps_ += 1.0;
  while (pending_steps_ >= config().train_ratio) {
    pending_steps_ -= config().train_ratio;
    if (!train_step()) {
      pending_steps_ = 0.0;
      break;
    }
  }
}

std::optional<Diagnostics> WmAgent::train_step() {
  auto sample = replay_->sample(train_rng_, static_cast<std::size_t>(config().batch_size),
                                static_cast<std::size_t>(config().batch_length));
  if (!sample) return std::nullopt;
  return train_on(*sample);
}

WmLoss WmAgent::world_model_step(const SequenceBatch& batch, Diagnostics& d) {
  const WmConfig& c = config();
  nn::ParamStore& store = nets_.params();
  store.zero_grad();
  WmLoss wl;
  {
    Tape t(store);
    nn::OneHotSampler sampler(train_rng_);
    wl = world_model_loss(t, nets_, batch, sampler);
    t.backward(wl.total);
    d["wm_loss"] = wl.total.scalar();
  }
  d["recon_loss"] = wl.recon;
  d["reward_loss"] = wl.reward;
  d["cont_loss"] = wl.cont;
  d["dyn_loss"] = wl.dyn;
  d["rep_loss"] = wl.rep;
  nn::agc_clip(store, "wm/", c.agc);
  wm_opt_.step(store);
  return wl;
}

void WmAgent::check_finite(Diagnostics d) {
  for (const auto& [k, v] : d)
    if (!std::isfinite(v))
      throw std::runtime_error("WmAgent: non-finite " + k + " at train step " + std::to_string(train_steps_));
  diagnostics_ = std::move(d);
}

Diagnostics WmAgent::train_world_model(const ReplaySample& sample) {
  const WmConfig& c = config();
  Diagnostics d;
  world_model_step(make_batch(sample, nets_.obs_dim(), nets_.num_actions(), c.symlog), d);
  ++train_steps_;
  check_finite(d);
  return d;
}

Diagnostics WmAgent::train_on(const ReplaySample& sample) {
  const WmConfig& c = config();
  nn::ParamStore& store = nets_.params();
  Diagnostics d;
  const SequenceBatch batch = make_batch(sample, nets_.obs_dim(), nets_.num_actions(), c.symlog);
  const WmLoss wl = world_model_step(batch, d);

  ImagStart start = starts_from_replay(nets_, batch, wl);
  if (c.imag_starts > 0 && c.imag_starts < start.h.rows()) {
    std::vector<Index> idx(static_cast<std::size_t>(start.h.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
    for (std::size_t i = 0; i < static_cast<std::size_t>(c.imag_starts); ++i)
      std::swap(idx[i], idx[i + train_rng_.below(idx.size() - i)]);
    idx.resize(static_cast<std::size_t>(c.imag_starts));
    auto take = [&](const Matrix& m) { return Matrix(m(idx, Eigen::all)); };
    start = ImagStart{take(start.h), take(start.z), take(start.h_pi), take(start.prev_action), take(start.prev_reward)};
  }
  nn::OneHotSampler sampler(train_rng_);
  const Imagined traj = imagine(nets_, start, c.horizon, sampler);
  AcTargets targets = compute_targets(nets_, traj, 1.0);
  const double spread = return_spread(targets.returns);
  return_spread_ema_ = spread_initialized_ ? c.return_ema_decay * return_spread_ema_ + (1 - c.return_ema_decay) * spread
                                           : spread;
  spread_initialized_ = true;
  targets.scale = return_scale();
  for (auto& a : targets.advantages) a /= targets.scale;

  store.zero_grad();
  {
    Tape t(store);
    AcLoss ac = actor_critic_loss(t, nets_, traj, targets);
    if (traj.horizon() > 0) t.backward(nn::add(ac.actor, ac.critic));
    d["actor_loss"] = ac.actor.scalar();
    d["critic_loss"] = ac.critic.scalar();
    d["entropy"] = ac.entropy;
  }
  nn::agc_clip(store, "actor/", c.agc);
  nn::agc_clip(store, "critic/", c.agc);
  actor_opt_.step(store);
  critic_opt_.step(store);
  d["return_scale"] = targets.scale;
  ++train_steps_;
  check_finite(d);
  return d;
}

void WmAgent::save_state(nn::BinaryWriter& w) const {
  nn::write_tensor_container(w, nets_.params().values());
  wm_opt_.state().save(w);
  actor_opt_.state().save(w);
  critic_opt_.state().save(w);
  w.write_string(train_rng_.serialize());
  w.write_f64(return_spread_ema_);
  w.write_bool(spread_initialized_);
  w.write_f64(pending_steps_);
  w.write_i64(train_steps_);
  w.write_matrix(state_.h_pi);
  replay_->save(w);
}

void WmAgent::load_state(nn::BinaryReader& r) {
  nets_.params().load_values(nn::read_tensor_container(r));
  wm_opt_.state() = nn::OptimizerState::load(r);
  actor_opt_.state() = nn::OptimizerState::load(r);
  critic_opt_.state() = nn::OptimizerState::load(r);
  train_rng_.deserialize(r.read_string());
  return_spread_ema_ = r.read_f64();
  spread_initialized_ = r.read_bool();
  pending_steps_ = r.read_f64();
  train_steps_ = r.read_i64();
  Matrix h_pi = r.read_matrix();
  auto replay = std::make_shared<ReplayBuffer>(1);
  replay->load(r);
  replay_ = std::move(replay);
  begin_episode(Mode::Train);
  if (config().persist_policy_state && h_pi.size() == config().policy_gru_units) state_.h_pi = h_pi;
}

}  // namespace lbwm::wm
