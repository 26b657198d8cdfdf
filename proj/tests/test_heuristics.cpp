#include <doctest.h>

#include "lbwm/heuristics.hpp"

using namespace lbwm;
using namespace lbwm::heuristics;
using sim::ObsMode;
using sim::Observation;

namespace {

Observation work_obs(std::vector<double> loads, double job = 0.0) {
  return Observation{job, std::move(loads), ObsMode::Work, {}};
}

}  // namespace

TEST_CASE("least work left picks the argmin") {
  HeuristicMemory m;
  Rng rng(0);
  const std::vector<double> rates{1, 1, 1};
  CHECK(decide(HeuristicKind::LeastWorkLeft, work_obs({5.0, 3.0, 4.0}), rates, m, rng) == 1);
}

TEST_CASE("shortest expected delay divides by rate") {
  HeuristicMemory m;
  Rng rng(0);
  const std::vector<double> rates{0.5, 1.0};
  // delays (8, 4) without the incoming job
  CHECK(decide(HeuristicKind::ShortestExpectedDelay, work_obs({4.0, 4.0}), rates, m, rng) == 1);
  // the incoming job's own work counts as well: (0+6)/0.5 = 12 vs (4+6)/1 = 10
  CHECK(decide(HeuristicKind::ShortestExpectedDelay, work_obs({0.0, 4.0}, 6.0), rates, m, rng) == 1);
  CHECK(decide(HeuristicKind::ShortestExpectedDelay, work_obs({0.0, 4.0}, 1.0), rates, m, rng) == 0);
}

TEST_CASE("round robin increments modulo k") {
  HeuristicMemory m{3};
  Rng rng(0);
  const std::vector<double> rates(10, 1.0);
  const auto obs = work_obs(std::vector<double>(10, 0.0));
  CHECK(decide(HeuristicKind::RoundRobin, obs, rates, m, rng) == 4);
  m.last = 9;
  CHECK(decide(HeuristicKind::RoundRobin, obs, rates, m, rng) == 0);
  HeuristicMemory fresh;
  CHECK(decide(HeuristicKind::RoundRobin, obs, rates, fresh, rng) == 0);
}

TEST_CASE("ties break to the lowest index") {
  HeuristicMemory m;
  Rng rng(0);
  const std::vector<double> rates(4, 1.0);
  Observation both{1.0, {2, 2, 2, 2}, ObsMode::Work, {1, 1, 1, 1}};
  CHECK(decide(HeuristicKind::LeastWorkLeft, both, rates, m, rng) == 0);
  CHECK(decide(HeuristicKind::JoinShortestQueue, both, rates, m, rng) == 0);
  CHECK(decide(HeuristicKind::ShortestExpectedDelay, both, rates, m, rng) == 0);
}

TEST_CASE("mode mismatch is reported") {
  HeuristicMemory m;
  Rng rng(0);
  const std::vector<double> rates(2, 1.0);
  CHECK_THROWS_AS(decide(HeuristicKind::JoinShortestQueue, work_obs({1, 2}), rates, m, rng), ModeMismatch);
  Observation counts{1.0, {1, 0}, ObsMode::Count, {}};
  CHECK_THROWS_AS(decide(HeuristicKind::LeastWorkLeft, counts, rates, m, rng), ModeMismatch);
  CHECK(decide(HeuristicKind::JoinShortestQueue, counts, rates, m, rng) == 1);
}

TEST_CASE("random dispatch is uniform and seeded") {
  HeuristicMemory m;
  Rng a(5), b(5);
  const std::vector<double> rates(10, 1.0);
  const auto obs = work_obs(std::vector<double>(10, 0.0));
  std::vector<int> hist(10, 0);
  for (int i = 0; i < 20000; ++i) {
    const int x = decide(HeuristicKind::Random, obs, rates, m, a);
    REQUIRE(x == decide(HeuristicKind::Random, obs, rates, m, b));
    ++hist[static_cast<std::size_t>(x)];
  }
  for (int h : hist) CHECK(std::abs(h - 2000) < 200);
}

TEST_CASE("names parse") {
  for (auto k : {HeuristicKind::Random, HeuristicKind::RoundRobin, HeuristicKind::JoinShortestQueue,
                 HeuristicKind::LeastWorkLeft, HeuristicKind::ShortestExpectedDelay})
    CHECK(parse_heuristic(to_string(k)) == k);
  CHECK_FALSE(parse_heuristic("sita"));
}
