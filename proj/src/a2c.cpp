#include "lbwm/a2c.hpp"

#include <cmath>
#include <stdexcept>

#include "lbwm/nn/categorical.hpp"

namespace lbwm::a2c {

using nn::Matrix;
using nn::Tape;
using nn::Var;

void A2cConfig::validate() const {
  if (hidden < 1 || rollout < 1) throw std::invalid_argument("a2c: hidden and rollout must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("a2c: lr must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("a2c: gamma must lie in [0, 1]");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("a2c: clip_norm must be > 0");
}

A2cNet::A2cNet(int obs_dim, int num_actions, int hidden, Rng& rng)
    : fc1_(store_, "a2c/trunk/fc1", obs_dim, hidden, rng),
      fc2_(store_, "a2c/trunk/fc2", hidden, hidden, rng),
      actor_(store_, "a2c/actor", hidden, num_actions, rng),
      critic_(store_, "a2c/critic", hidden, 1, rng),
      obs_dim_(obs_dim),
      num_actions_(num_actions) {}

A2cNet::Output A2cNet::forward(Tape& t, Var obs) const {
  Var h = nn::relu(fc2_(t, nn::relu(fc1_(t, obs))));
  Var logits = actor_(t, h);
  Output out;
  out.log_probs = nn::log_softmax_rows(logits);
  out.probs = nn::softmax_rows(logits);
  out.value = critic_(t, h);
  return out;
}

std::pair<std::vector<double>, double> A2cNet::evaluate(const std::vector<double>& obs) const {
  Tape t(store_);
  Matrix x(1, static_cast<nn::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) x(0, static_cast<nn::Index>(i)) = obs[i];
  Output out = forward(t, t.constant(std::move(x)));
  const Matrix& p = out.probs.value();
  return {std::vector<double>(p.data(), p.data() + p.size()), out.value.value()(0, 0)};
}

void RolloutBuffer::clear() {
  obs.clear();
  actions.clear();
  rewards.clear();
  values.clear();
  bootstrap = 0.0;
}

std::vector<double> compute_returns(const std::vector<double>& rewards, double bootstrap, double gamma) {
  std::vector<double> out(rewards.size());
  double next = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    next = rewards[i] + gamma * next;
    out[i] = next;
  }
  return out;
}

std::vector<double> advantage(const std::vector<double>& returns, const std::vector<double>& values) {
  if (returns.size() != values.size())
    throw std::invalid_argument("advantage: " + std::to_string(returns.size()) + " returns vs " +
                                std::to_string(values.size()) + " values");
  std::vector<double> out(returns.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = returns[i] - values[i];
  return out;
}

LossTerms a2c_loss(Tape& t, const A2cNet& net, const RolloutBuffer& buffer, const std::vector<double>& returns,
                   const std::vector<double>& advantages, const A2cConfig& config) {
  const auto n = static_cast<nn::Index>(buffer.size());
  if (n == 0) throw std::invalid_argument("a2c_loss: empty buffer");
  if (returns.size() != buffer.size() || advantages.size() != buffer.size())
    throw std::invalid_argument("a2c_loss: returns/advantages do not match the buffer length");
  Matrix x(n, net.obs_dim());
  Matrix r(n, 1), a(n, 1);
  for (nn::Index i = 0; i < n; ++i) {
    const auto& o = buffer.obs[static_cast<std::size_t>(i)];
    for (nn::Index j = 0; j < x.cols(); ++j) x(i, j) = o[static_cast<std::size_t>(j)];
    r(i, 0) = returns[static_cast<std::size_t>(i)];
    a(i, 0) = advantages[static_cast<std::size_t>(i)];
  }
  const Matrix onehot = nn::indices_onehot(buffer.actions, net.num_actions());
  A2cNet::Output out = net.forward(t, t.constant(std::move(x)));
  Var logp_a = nn::sum_cols(nn::mul(out.log_probs, t.constant(onehot)));
  LossTerms terms;
  terms.policy = nn::neg(nn::sum(nn::mul(logp_a, t.constant(a))));
  terms.value = nn::sum(nn::square(nn::sub(out.value, t.constant(r))));
  terms.entropy = nn::neg(nn::sum(nn::mul(out.probs, out.log_probs)));
  terms.total = nn::sub(nn::add(terms.policy, nn::scale(terms.value, config.value_coef)),
                        nn::scale(terms.entropy, config.entropy_coef));
  return terms;
}

// ---------------------------------------------------------------------------

namespace {
Rng init_rng(std::uint64_t seed) { return Rng(derive_seed(seed, 0, 0xa2c)); }
}  // namespace

A2cAgent::A2cAgent(int num_servers, A2cConfig config, std::uint64_t seed)
    : config_(config),
      net_([&] {
        config.validate();
        Rng rng = init_rng(seed);
        return A2cNet(num_servers + 1, num_servers, config.hidden, rng);
      }()),
      optimizer_(nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8}, "a2c/"),
      normalizer_(static_cast<std::size_t>(num_servers + 1)) {}

std::vector<double> A2cAgent::prepare(const sim::Observation& obs) const {
  std::vector<double> x = obs.flatten();
  if (static_cast<int>(x.size()) != net_.obs_dim())
    throw std::invalid_argument("A2cAgent: observation has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(net_.obs_dim()));
  return config_.normalize_obs ? normalizer_.normalize(x) : x;
}

std::pair<std::vector<double>, double> A2cAgent::forward(const sim::Observation& obs) const {
  return net_.evaluate(prepare(obs));
}

void A2cAgent::begin_episode(Mode) { pending_obs_.clear(); }

int A2cAgent::act(const sim::Observation& obs, Mode mode, Rng& rng) {
  if (mode == Mode::Train && config_.normalize_obs) normalizer_.update(obs.flatten());
  std::vector<double> x = prepare(obs);
  auto [probs, value] = net_.evaluate(x);
  int action = 0;
  if (mode == Mode::Train) {
    Matrix p(1, static_cast<nn::Index>(probs.size()));
    for (std::size_t i = 0; i < probs.size(); ++i) p(0, static_cast<nn::Index>(i)) = probs[i];
    action = nn::onehot_indices(nn::sample_onehot(rng, p))[0];
  } else {
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[static_cast<std::size_t>(action)]) action = static_cast<int>(i);
  }
  pending_obs_ = std::move(x);
  pending_value_ = value;
  return action;
}

void A2cAgent::observe(const sim::Observation&, int action, double reward, const sim::Observation& next_obs,
                       bool done, Mode mode) {
  if (mode != Mode::Train) return;
  if (pending_obs_.empty()) throw std::logic_error("A2cAgent::observe without a preceding act");
  buffer_.obs.push_back(std::move(pending_obs_));
  pending_obs_.clear();
  buffer_.actions.push_back(action);
  buffer_.rewards.push_back(shape_reward(reward, done));
  buffer_.values.push_back(pending_value_);
  if (done || static_cast<int>(buffer_.size()) >= config_.rollout) {
    buffer_.bootstrap = done ? 0.0 : net_.evaluate(prepare(next_obs)).second;
    update();
  }
}

double A2cAgent::shape_reward(double reward, bool done) {
  double r = reward * config_.reward_scale;
  if (config_.normalize_reward) {
    running_return_ = running_return_ * config_.gamma + r;
    return_stats_.update({running_return_});
    // A single sample has no spread; its own magnitude stands in.
    const double spread = return_stats_.count() > 1 ? return_stats_.stddev()[0] : std::abs(running_return_);
    if (spread > 0.0) r /= spread + 1e-8;
    if (done) running_return_ = 0.0;
  }
  return r;
}

Diagnostics A2cAgent::update() {
  if (buffer_.size() == 0) return diagnostics_;
  const auto returns = compute_returns(buffer_.rewards, buffer_.bootstrap, config_.gamma);
  const auto adv = advantage(returns, buffer_.values);
  net_.params().zero_grad();
  Diagnostics d;
  {
    Tape t(net_.params());
    LossTerms terms = a2c_loss(t, net_, buffer_, returns, adv, config_);
    t.backward(terms.total);
    d["loss"] = terms.total.scalar();
    d["policy_loss"] = terms.policy.scalar();
    d["value_loss"] = terms.value.scalar();
    d["entropy"] = terms.entropy.scalar() / static_cast<double>(buffer_.size());
  }
  d["grad_norm"] = nn::clip_global_norm(net_.params(), "a2c/", config_.clip_norm);
  optimizer_.step(net_.params());
  ++updates_;
  buffer_.clear();
  for (const auto& [k, v] : d)
    if (!std::isfinite(v)) throw std::runtime_error("A2cAgent: non-finite " + k + " after update " +
                                                    std::to_string(updates_));
  diagnostics_ = d;
  return d;
}

void A2cAgent::save_state(nn::BinaryWriter& w) const {
  nn::write_tensor_container(w, net_.params().values());
  optimizer_.state().save(w);
  normalizer_.save(w);
  return_stats_.save(w);
  w.write_f64(running_return_);
  w.write_i64(updates_);
}

void A2cAgent::load_state(nn::BinaryReader& r) {
  net_.params().load_values(nn::read_tensor_container(r));
  optimizer_.state() = nn::OptimizerState::load(r);
  normalizer_.load(r);
  return_stats_.load(r);
  running_return_ = r.read_f64();
  updates_ = r.read_i64();
  buffer_.clear();
  pending_obs_.clear();
}

}  // namespace lbwm::a2c
