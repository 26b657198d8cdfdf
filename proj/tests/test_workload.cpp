#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lbwm/workload.hpp"

using namespace lbwm;
using namespace lbwm::workload;

namespace {

double sample_median(std::vector<double> v) {
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

TEST_CASE("presets are the three table rows") {
  CHECK(preset(Difficulty::Easy) == WorkloadParams{100, 1.5, 80});
  CHECK(preset(Difficulty::Medium) == WorkloadParams{80, 2.0, 120});
  CHECK(preset(Difficulty::Hard) == WorkloadParams{50, 2.5, 150});
}

TEST_CASE("difficulty names round-trip") {
  for (Difficulty d : kAllDifficulties) CHECK(parse_difficulty(to_string(d)) == d);
  CHECK_FALSE(parse_difficulty("extreme").has_value());
}

TEST_CASE("sample_params") {
  SUBCASE("degenerate ranges give the point") {
    Rng rng(1);
    ParamRanges r{{100, 100}, {1.5, 1.5}, {80, 80}};
    CHECK(sample_params(rng, r) == WorkloadParams{100, 1.5, 80});
  }
  SUBCASE("default ranges stay within the table extremes") {
    Rng rng(3);
    ParamRanges r;
    for (int i = 0; i < 10000; ++i) {
      const auto p = sample_params(rng, r);
      REQUIRE(p.arrival_interval >= 50);
      REQUIRE(p.arrival_interval <= 100);
      REQUIRE(p.pareto_shape >= 1.5);
      REQUIRE(p.pareto_shape <= 2.5);
      REQUIRE(p.pareto_scale >= 80);
      REQUIRE(p.pareto_scale <= 150);
    }
  }
  SUBCASE("same seed, same params") {
    Rng a(42), b(42);
    CHECK(sample_params(a, {}) == sample_params(b, {}));
  }
  SUBCASE("inverted range rejected") {
    ParamRanges r;
    r.shape = {2.0, 1.0};
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  }
}

TEST_CASE("inverse-CDF boundaries") {
  CHECK(exponential_from_uniform(0.0, 100.0) == 0.0);
  CHECK(exponential_from_uniform(0.5, 100.0) == doctest::Approx(69.314718055994530).epsilon(1e-12));
  CHECK(pareto_from_uniform(0.0, 1.5, 80.0) == 80.0);
  CHECK(pareto_from_uniform(0.0, 2.5, 150.0) == 150.0);
}

TEST_CASE("exponential inter-arrival mean at n=1e6") {
  Rng rng(11);
  double total = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double t = poisson_interarrival(rng, 100.0);
    REQUIRE(t >= 0.0);
    total += t;
  }
  CHECK(std::abs(total / n - 100.0) / 100.0 < 0.01);
}

TEST_CASE("Pareto medians match x_m * 2^(1/alpha)") {
  struct Case {
    double shape, scale;
  };
  for (Case c : {Case{1.5, 80.0}, Case{2.0, 120.0}}) {
    Rng rng(5);
    std::vector<double> xs(1000000);
    for (double& x : xs) {
      x = pareto_size(rng, c.shape, c.scale);
      REQUIRE(x >= c.scale);
    }
    const double expected = c.scale * std::pow(2.0, 1.0 / c.shape);
    CHECK(std::abs(sample_median(xs) - expected) / expected < 0.02);
  }
  CHECK(80.0 * std::pow(2.0, 1.0 / 1.5) == doctest::Approx(126.99).epsilon(1e-4));
  CHECK(120.0 * std::sqrt(2.0) == doctest::Approx(169.71).epsilon(1e-4));
}

TEST_CASE("sample streams are reproducible") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(pareto_size(a, 2.0, 100.0) == pareto_size(b, 2.0, 100.0));
    REQUIRE(poisson_interarrival(a, 50.0) == poisson_interarrival(b, 50.0));
  }
  Rng c(1);
  const std::string state = c.serialize();
  const double first = c.uniform();
  Rng d(999);
  d.deserialize(state);
  CHECK(d.uniform() == first);
}

TEST_CASE("derived seeds differ per index and stream") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(7, 3, 2) == derive_seed(7, 3, 2));
}
