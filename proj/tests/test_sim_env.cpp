#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lbwm/sim_env.hpp"
#include "support/sim_oracle.hpp"

using namespace lbwm;
using namespace lbwm::sim;

namespace {

EnvConfig single_server(double rate) {
  EnvConfig c;
  c.num_servers = 1;
  c.rate_min = rate;
  c.rate_max = rate;
  return c;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("service rates are linearly spaced") {
  EnvConfig c;
  Env env(c);
  const auto& r = env.rates();
  REQUIRE(r.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(r[static_cast<std::size_t>(i)] == doctest::Approx(0.15 + 0.1 * i));
  CHECK(std::accumulate(r.begin(), r.end(), 0.0) == doctest::Approx(6.0));

  c.num_servers = 1;
  CHECK(Env(c).rates() == std::vector<double>{0.15});
  c.num_servers = 2;
  CHECK(Env(c).rates() == std::vector<double>{0.15, 1.05});
}

TEST_CASE("invalid configs are rejected") {
  EnvConfig c;
  c.num_servers = 0;
  CHECK_THROWS_AS(Env{c}, std::invalid_argument);
  c = {};
  c.rate_min = 2.0;
  CHECK_THROWS_AS(Env{c}, std::invalid_argument);
  c = {};
  c.jobs_per_episode = 0;
  CHECK_THROWS_AS(Env{c}, std::invalid_argument);
  c = {};
  c.workload.pareto_shape = -1;
  CHECK_THROWS_AS(Env{c}, std::invalid_argument);
}

TEST_CASE("reset gives an empty system and the first job") {
  EnvConfig c;
  c.workload = workload::preset(workload::Difficulty::Easy);
  Env env(c);
  const Observation a = env.reset(7);
  CHECK(a.server_loads == std::vector<double>(10, 0.0));
  CHECK(a.job_size >= 80.0);
  CHECK(a.flatten().size() == 11);
  const Observation b = env.reset(7);
  CHECK(a.job_size == b.job_size);
}

TEST_CASE("hand-simulated steps") {
  SUBCASE("single job completes inside the interval") {
    Env env(single_server(1.0));
    env.reset_scripted({{0.0, 2.0}, {3.0, 1.0}});
    const StepResult r = env.step(0);
    CHECK(r.reward == doctest::Approx(-2.0));
    REQUIRE(r.info.completed.size() == 1);
    CHECK(r.info.completed[0].time == doctest::Approx(2.0));
    CHECK(env.clock() == 3.0);
    CHECK_FALSE(r.done);
  }
  SUBCASE("zero-size job costs nothing") {
    Env env(single_server(1.0));
    env.reset_scripted({{0.0, 0.0}, {3.0, 1.0}});
    CHECK(env.step(0).reward == 0.0);
  }
  SUBCASE("two jobs sharing one slow server") {
    Env env(single_server(0.5));
    env.reset_scripted({{0.0, 1.0}, {1.0, 1.0}, {4.0, 1.0}});
    CHECK(env.step(0).reward == doctest::Approx(-1.0));
    const StepResult r = env.step(0);
    CHECK(r.reward == doctest::Approx(-4.0));
    CHECK(env.jobs()[0].completion_time == doctest::Approx(2.0));
    CHECK(env.jobs()[1].completion_time == doctest::Approx(4.0));
  }
}

TEST_CASE("step errors") {
  Env env(single_server(1.0));
  env.reset_scripted({{0.0, 1.0}});
  CHECK_THROWS_AS(env.step(1), std::out_of_range);
  CHECK_THROWS_AS(env.step(-1), std::out_of_range);
  const StepResult r = env.step(0);
  CHECK(r.done);
  CHECK_THROWS_AS(env.step(0), std::logic_error);
}

TEST_CASE("final step drains the system when the penalty is on") {
  Env env(single_server(0.5));
  env.reset_scripted({{0.0, 1.0}, {1.0, 1.0}});
  env.step(0);
  const StepResult r = env.step(0);
  CHECK(r.done);
  CHECK(env.clock() == doctest::Approx(4.0));
  CHECK(r.reward == doctest::Approx(-4.0));
  CHECK(r.observation.job_size == 0.0);
  CHECK(r.observation.server_loads[0] == 0.0);
}

TEST_CASE("observation modes") {
  EnvConfig c;
  c.num_servers = 2;
  c.expose_both_modes = true;
  Env env(c);
  env.reset_scripted({{0.0, 3.0}, {0.0, 2.0}, {1.0, 5.0}});
  env.step(0);
  const StepResult r = env.step(0);
  // Server 0 (rate 0.15) holds 3 + 2 work minus one time unit of service.
  CHECK(r.observation.mode == ObsMode::Work);
  CHECK(r.observation.server_loads[0] == doctest::Approx(5.0 - 0.15));
  CHECK(r.observation.alt_loads[0] == 2.0);
  CHECK(r.observation.loads_in(ObsMode::Count) == &r.observation.alt_loads);
  CHECK(env.observe(ObsMode::Count).server_loads[1] == 0.0);
}

TEST_CASE("random episodes agree with the brute-force oracle") {
  Rng policy(99);
  for (int episode = 0; episode < 20; ++episode) {
    EnvConfig c;
    c.jobs_per_episode = 1 + static_cast<int>(policy.below(100));
    c.workload = workload::preset(workload::kAllDifficulties[static_cast<std::size_t>(episode % 3)]);
    Env env(c);
    env.reset(static_cast<std::uint64_t>(episode));
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<double> t_prev;
    bool done = false;
    while (!done) {
      const int a = static_cast<int>(policy.below(10));
      actions.push_back(a);
      t_prev.push_back(env.clock());
      const StepResult r = env.step(a);
      REQUIRE(r.info.t_now >= r.info.t_prev);
      REQUIRE(r.reward <= 0.0);
      rewards.push_back(r.reward);
      done = r.done;
    }
    std::vector<double> arrival, size;
    for (const Job& j : env.jobs()) {
      arrival.push_back(j.arrival_time);
      size.push_back(j.size);
    }
    const auto oracle = testing::oracle_simulate(arrival, size, actions, env.rates(), true);
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      REQUIRE(rel_diff(rewards[i], oracle.rewards[i]) < 1e-9);
      REQUIRE(rel_diff(*env.jobs()[i].completion_time, oracle.completion[i]) < 1e-9);
    }

    // Reward-delay identity and work conservation.
    double time_in_system = 0.0;
    for (const Job& j : env.jobs()) time_in_system += *j.completion_time - j.arrival_time;
    const double total = std::accumulate(rewards.begin(), rewards.end(), 0.0);
    CHECK(std::abs(-total - time_in_system) / time_in_system < 1e-6);
    for (std::size_t s = 0; s < env.rates().size(); ++s) {
      const auto& st = env.server_stats()[s];
      REQUIRE(rel_diff(st.completed_work, st.rate * st.busy_time) < 1e-9);
      double assigned = 0.0;
      for (const Job& j : env.jobs())
        if (j.assigned_server == static_cast<int>(s)) assigned += j.size;
      REQUIRE(rel_diff(st.completed_work, assigned) < 1e-9);
    }
  }
}

TEST_CASE("FIFO completion order per server") {
  EnvConfig c;
  c.jobs_per_episode = 200;
  Env env(c);
  env.reset(5);
  Rng policy(1);
  bool done = false;
  while (!done) done = env.step(static_cast<int>(policy.below(3))).done;
  for (int s = 0; s < 3; ++s) {
    double last = -1.0;
    for (const Job& j : env.jobs()) {
      if (j.assigned_server != s) continue;
      REQUIRE(*j.completion_time >= last);
      REQUIRE(*j.completion_time >= j.arrival_time);
      last = *j.completion_time;
    }
  }
}

TEST_CASE("same seed and actions give the identical step stream") {
  EnvConfig c;
  c.jobs_per_episode = 50;
  auto run = [&] {
    Env env(c);
    env.reset(321);
    std::vector<double> out;
    for (int i = 0; i < 50; ++i) {
      const StepResult r = env.step(i % 10);
      out.push_back(r.reward);
      out.push_back(r.observation.job_size);
      for (double l : r.observation.server_loads) out.push_back(l);
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("episode finishes exactly once after jobs_per_episode arrivals") {
  EnvConfig c;
  c.jobs_per_episode = 10;
  Env env(c);
  env.reset(1);
  int done_count = 0;
  for (int i = 0; i < 10; ++i) done_count += env.step(0).done ? 1 : 0;
  CHECK(done_count == 1);
  CHECK(env.jobs_emitted() == 10);
  CHECK(env.jobs_completed() == 10);
}

TEST_CASE("without drain the final interval ends at the next arrival draw") {
  EnvConfig c = single_server(1.0);
  c.drain_penalty = false;
  Env env(c);
  env.reset_scripted({{0.0, 5.0}});
  const StepResult r = env.step(0);
  CHECK(r.done);
  CHECK(r.reward == 0.0);
  CHECK(env.jobs()[0].completion_time == std::nullopt);
}

TEST_CASE("event trace is newline-delimited JSON") {
  Env env(single_server(1.0));
  std::ostringstream os;
  env.set_trace(&os);
  env.reset_scripted({{0.0, 2.0}, {3.0, 1.0}});
  env.step(0);
  env.step(0);
  std::istringstream is(os.str());
  std::string line;
  std::vector<std::string> events;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    REQUIRE(j.contains("t"));
    REQUIRE(j.contains("job_id"));
    REQUIRE(j.contains("server"));
    REQUIRE(j.contains("size"));
    events.push_back(j["event"].get<std::string>());
  }
  CHECK(events == std::vector<std::string>{"arrival", "assign", "complete", "arrival", "assign", "complete"});
}

TEST_CASE("offered load of the presets") {
  EnvConfig c;
  c.workload = workload::preset(workload::Difficulty::Easy);
  CHECK(offered_load(c) == doctest::Approx(0.4).epsilon(1e-12));
  c.workload = workload::preset(workload::Difficulty::Medium);
  CHECK(offered_load(c) == doctest::Approx(0.5).epsilon(1e-12));
  c.workload = workload::preset(workload::Difficulty::Hard);
  CHECK(offered_load(c) == doctest::Approx(250.0 / 50.0 / 6.0).epsilon(1e-12));
  c.workload.pareto_shape = 1.0;
  CHECK_THROWS_AS(offered_load(c), std::domain_error);
}
