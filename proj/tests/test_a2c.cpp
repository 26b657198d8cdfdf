#include <doctest.h>

#include <cmath>

#include "lbwm/a2c.hpp"
#include "support/a2c_cases.hpp"
#include "support/finite_diff.hpp"
#include "support/op_cases.hpp"

using namespace lbwm;
using namespace lbwm::a2c;
using nn::Matrix;

namespace {

sim::Observation make_obs(Rng& rng, int k) {
  sim::Observation o;
  o.job_size = rng.uniform(80, 300);
  for (int i = 0; i < k; ++i) o.server_loads.push_back(rng.uniform(0, 500));
  return o;
}

RolloutBuffer random_buffer(Rng& rng, int obs_dim, int k, int n) {
  RolloutBuffer b;
  for (int i = 0; i < n; ++i) {
    b.obs.push_back({});
    for (int j = 0; j < obs_dim; ++j) b.obs.back().push_back(rng.uniform(-2, 2));
    b.actions.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
    b.rewards.push_back(rng.uniform(-3, 0));
    b.values.push_back(rng.uniform(-2, 2));
  }
  return b;
}

void zero_params(nn::ParamStore& s) {
  for (auto& [_, e] : s) e.value.setZero();
}

}  // namespace

TEST_CASE("forward pass") {
  Rng rng(1);
  A2cNet net(11, 10, 32, rng);
  const std::vector<double> obs(11, 0.7);
  auto [p, v] = net.evaluate(obs);
  double total = 0.0;
  for (double x : p) total += x;
  CHECK(std::abs(total - 1.0) < 1e-6);
  auto [p2, v2] = net.evaluate(obs);
  CHECK(p == p2);
  CHECK(v == v2);

  zero_params(net.params());
  auto [pu, vu] = net.evaluate(obs);
  for (double x : pu) CHECK(x == doctest::Approx(0.1));
  CHECK(vu == 0.0);
}

TEST_CASE("n-step returns") {
  CHECK(compute_returns({1, 1}, 2.0, 0.5) == std::vector<double>{2.0, 2.0});
  CHECK(compute_returns({3, -1, 2}, 10.0, 0.0) == std::vector<double>{3, -1, 2});
  CHECK(compute_returns({0, 0, 0}, 0.0, 0.99) == std::vector<double>{0, 0, 0});
}

TEST_CASE("advantage") {
  CHECK(advantage({2, 2}, {1, 3}) == std::vector<double>{1, -1});
  CHECK(advantage({1.5, -2}, {1.5, -2}) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(advantage({1}, {1, 2}), std::invalid_argument);

  // A constant added to every return (value held fixed) shifts A by the same constant.
  const std::vector<double> r{-1, 0.5, 2};
  const double gamma = 0.9, c = 0.25;
  std::vector<double> shifted_rewards;
  for (double x : r) shifted_rewards.push_back(x + c * (1 - gamma));
  const auto base = compute_returns(r, 4.0, gamma);
  const auto moved = compute_returns(shifted_rewards, 4.0 + c, gamma);
  const std::vector<double> v{0.1, 0.2, 0.3};
  const auto a0 = advantage(base, v), a1 = advantage(moved, v);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a1[i] - a0[i] == doctest::Approx(c));
}

TEST_CASE("loss with zero advantage and exact values is the entropy term") {
  Rng rng(2);
  A2cNet net(11, 10, 16, rng);
  zero_params(net.params());
  RolloutBuffer b = random_buffer(rng, 11, 10, 5);
  std::vector<double> zeros(5, 0.0);
  A2cConfig cfg;
  nn::Tape t(net.params(), false);
  b.values = zeros;
  LossTerms terms = a2c_loss(t, net, b, zeros, zeros, cfg);
  CHECK(terms.entropy.scalar() == doctest::Approx(5 * std::log(10.0)));
  CHECK(std::log(10.0) == doctest::Approx(2.302585).epsilon(1e-6));
  CHECK(terms.total.scalar() == doctest::Approx(-cfg.entropy_coef * 5 * std::log(10.0)));
}

TEST_CASE("entropy is maximal exactly for equal logits") {
  nn::Tape t;
  auto entropy = [&](Matrix logits) {
    nn::Var l = t.constant(std::move(logits));
    return nn::neg(nn::sum(nn::mul(nn::softmax_rows(l), nn::log_softmax_rows(l)))).scalar();
  };
  CHECK(entropy(Matrix::Constant(1, 10, 3.0)) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  Rng rng(3);
  for (int i = 0; i < 50; ++i) CHECK(entropy(testing::random_matrix(rng, 1, 10)) < std::log(10.0));
}

TEST_CASE("a2c loss gradient matches central differences") {
  for (int i = 0; i < 10; ++i) {
    auto c = testing::make_a2c_case(static_cast<std::uint64_t>(10 + i));
    REQUIRE(testing::trunk_kink_distance(c.net, c.buffer) >= testing::kKinkMargin);
    A2cConfig cfg;
    const auto res = testing::check_gradients(c.net.params(), [&](nn::Tape& t) {
      return a2c_loss(t, c.net, c.buffer, c.returns, c.advantages, cfg).total;
    });
    CHECK(res.rel_error <= 1e-4);
  }
}

TEST_CASE("policy-gradient term depends only on the advantage") {
  Rng rng(4);
  A2cNet net(6, 4, 8, rng);
  RolloutBuffer b = random_buffer(rng, 6, 4, 6);
  const auto returns = compute_returns(b.rewards, 0.0, 0.99);
  const auto adv = advantage(returns, b.values);
  auto policy_grad = [&](const std::vector<double>& r) {
    net.params().zero_grad();
    nn::Tape t(net.params());
    t.backward(a2c_loss(t, net, b, r, adv, A2cConfig{}).policy);
    std::vector<Matrix> g;
    for (auto& [_, e] : net.params()) g.push_back(e.grad);
    return g;
  };
  auto g0 = policy_grad(returns);
  std::vector<double> shifted;
  for (double r : returns) shifted.push_back(r + 100.0);
  auto g1 = policy_grad(shifted);
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK((g0[i] - g1[i]).norm() <= 1e-6);
}

TEST_CASE("update keeps a uniform policy uniform when there is nothing to learn") {
  A2cConfig cfg;
  cfg.hidden = 16;
  A2cAgent agent(10, cfg, 5);
  for (auto& [name, e] : agent.net().params())
    if (nn::has_prefix(name, "a2c/actor") || nn::has_prefix(name, "a2c/critic")) e.value.setZero();
  Rng rng(6);
  RolloutBuffer& b = agent.buffer();
  b = random_buffer(rng, 11, 10, 8);
  std::fill(b.values.begin(), b.values.end(), 0.0);
  std::fill(b.rewards.begin(), b.rewards.end(), 0.0);
  b.bootstrap = 0.0;
  const nn::TensorMap before = agent.net().params().values();
  const Diagnostics d = agent.update();
  CHECK(d.at("entropy") == doctest::Approx(std::log(10.0)));
  for (const auto& [name, v] : agent.net().params().values())
    CHECK((v - before.at(name)).cwiseAbs().maxCoeff() <= 1e-9);
  Rng orng(7);
  auto [p, v] = agent.forward(make_obs(orng, 10));
  for (double x : p) CHECK(x == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(agent.buffer().size() == 0);
}

TEST_CASE("updates are deterministic") {
  auto run = [] {
    A2cConfig cfg;
    cfg.hidden = 16;
    A2cAgent agent(4, cfg, 9);
    Rng rng(8);
    for (int u = 0; u < 3; ++u) {
      agent.buffer() = random_buffer(rng, 5, 4, 10);
      agent.update();
    }
    return agent.param_checksum();
  };
  CHECK(run() == run());
}

TEST_CASE("loss decreases when overfitting a single transition") {
  A2cConfig cfg;
  cfg.hidden = 32;
  A2cAgent agent(4, cfg, 11);
  Rng rng(12);
  const RolloutBuffer fixed = random_buffer(rng, 5, 4, 1);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 100; ++i) {
    agent.buffer() = fixed;
    const double loss = agent.update().at("loss");
    if (i == 0) first = loss;
    last = loss;
  }
  CHECK(last < first);
}

TEST_CASE("agent acting and checkpoint state round-trip") {
  A2cConfig cfg;
  cfg.hidden = 16;
  cfg.rollout = 4;
  A2cAgent agent(3, cfg, 13);
  Rng rng(14);
  agent.begin_episode(Mode::Train);
  sim::Observation obs = make_obs(rng, 3);
  for (int i = 0; i < 9; ++i) {
    const int a = agent.act(obs, Mode::Train, rng);
    REQUIRE(a >= 0);
    REQUIRE(a < 3);
    const sim::Observation next = make_obs(rng, 3);
    agent.observe(obs, a, -rng.uniform(0, 100), next, i == 8, Mode::Train);
    obs = next;
  }
  CHECK(agent.updates() == 3);

  nn::BinaryWriter w;
  agent.save_state(w);
  A2cAgent restored(3, cfg, 999);
  nn::BinaryReader r(w.bytes());
  restored.load_state(r);
  CHECK(restored.param_checksum() == agent.param_checksum());
  for (int i = 0; i < 20; ++i) {
    const sim::Observation o = make_obs(rng, 3);
    CHECK(restored.forward(o) == agent.forward(o));
  }
}

TEST_CASE("reward normalization makes learning invariant to the reward scale") {
  auto run = [](double reward_scale) {
    A2cConfig c;
    c.hidden = 16;
    c.rollout = 16;
    c.reward_scale = reward_scale;
    A2cAgent agent(10, c, 3);
    sim::EnvConfig ec;
    ec.jobs_per_episode = 40;
    sim::Env env(ec);
    Rng rng(5);
    for (std::uint64_t ep = 0; ep < 3; ++ep) {
      auto obs = env.reset(ep);
      agent.begin_episode(Mode::Train);
      while (true) {
        const int a = agent.act(obs, Mode::Train, rng);
        auto res = env.step(a);
        agent.observe(obs, a, res.reward, res.observation, res.done, Mode::Train);
        if (res.done) break;
        obs = res.observation;
      }
    }
    return agent.net().params().values();
  };
  const auto a = run(1e-3), b = run(1.0);
  double worst = 0.0;
  for (const auto& [name, m] : a) worst = std::max(worst, (m - b.at(name)).cwiseAbs().maxCoeff());
  CHECK(worst <= 1e-6);
}
