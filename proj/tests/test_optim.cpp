#include <doctest.h>

#include <cmath>

#include "lbwm/nn/optim.hpp"
#include "support/op_cases.hpp"

using namespace lbwm;
using namespace lbwm::nn;

namespace {

ParamStore scalar_store(double value, double grad) {
  ParamStore s;
  s.add("p", Matrix::Constant(1, 1, value));
  s.at("p").grad(0, 0) = grad;
  return s;
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    ParamStore s = scalar_store(1.5, 0.0);
    Adam opt;
    opt.step(s);
    CHECK(s.at("p").value(0, 0) == 1.5);
  }
  SUBCASE("first bias-corrected step equals -lr * sign") {
    ParamStore s = scalar_store(0.0, 1.0);
    Adam opt({0.1, 0.9, 0.999, 1e-8});
    opt.step(s);
    CHECK(s.at("p").value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("deterministic") {
    Rng rng(1);
    ParamStore a, b;
    a.add("w", testing::random_matrix(rng, 3, 3));
    b.add("w", a.at("w").value);
    Adam oa, ob;
    for (int i = 0; i < 5; ++i) {
      Matrix g = testing::random_matrix(rng, 3, 3);
      a.at("w").grad = g;
      b.at("w").grad = g;
      oa.step(a);
      ob.step(b);
    }
    CHECK(a.at("w").value == b.at("w").value);
    CHECK(oa.state() == ob.state());
  }
}

TEST_CASE("laprop") {
  SUBCASE("zero gradients and zero state leave parameters unchanged") {
    ParamStore s = scalar_store(2.0, 0.0);
    LaProp opt;
    opt.step(s);
    CHECK(s.at("p").value(0, 0) == 2.0);
  }
  SUBCASE("first step moves by exactly lr") {
    ParamStore s = scalar_store(0.0, 1.0);
    LaProp opt({4e-5, 0.9, 0.999, 1e-20});
    opt.step(s);
    CHECK(s.at("p").value(0, 0) == doctest::Approx(-4e-5).epsilon(1e-12));
  }
  SUBCASE("first step opposes the gradient sign for any magnitude") {
    for (double g : {1e-12, -3.0, 250.0, -1e-7}) {
      ParamStore s = scalar_store(0.0, g);
      LaProp opt;
      opt.step(s);
      const double delta = s.at("p").value(0, 0);
      CHECK(std::signbit(delta) != std::signbit(g));
      CHECK(std::abs(delta) == doctest::Approx(4e-5).epsilon(1e-6));
    }
  }
  SUBCASE("prefix restricts the update") {
    ParamStore s;
    s.add("a/x", Matrix::Ones(1, 1));
    s.add("b/x", Matrix::Ones(1, 1));
    s.at("a/x").grad(0, 0) = 1.0;
    s.at("b/x").grad(0, 0) = 1.0;
    LaProp opt({}, "a/");
    opt.step(s);
    CHECK(s.at("a/x").value(0, 0) < 1.0);
    CHECK(s.at("b/x").value(0, 0) == 1.0);
  }
  SUBCASE("state serializes") {
    ParamStore s = scalar_store(0.0, 0.5);
    LaProp opt;
    opt.step(s);
    BinaryWriter w;
    opt.state().save(w);
    BinaryReader r(w.bytes());
    CHECK(OptimizerState::load(r) == opt.state());
  }
}

TEST_CASE("adaptive gradient clipping") {
  Matrix theta = row_vector({1.0, 0.0});
  Matrix g = row_vector({0.0, 10.0});
  CHECK(agc_clip(theta, g).norm() == doctest::Approx(0.3));
  Matrix small = row_vector({0.1, 0.0});
  CHECK(agc_clip(theta, small) == small);
  Matrix zero = Matrix::Zero(1, 2);
  CHECK(agc_clip(zero, row_vector({1.0, 0.0})).norm() == doctest::Approx(3e-4));

  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    Matrix p = testing::random_matrix(rng, 4, 4, -rng.uniform(), rng.uniform());
    Matrix gr = testing::random_matrix(rng, 4, 4, -10, 10);
    const double bound = 0.3 * std::max(p.norm(), kAgcEps) + 1e-12;
    REQUIRE(agc_clip(p, gr).norm() <= bound);
  }
}

TEST_CASE("global-norm clipping") {
  ParamStore s;
  s.add("a", Matrix::Zero(1, 2));
  s.add("b", Matrix::Zero(1, 1));
  s.at("a").grad = row_vector({3.0, 0.0});
  s.at("b").grad = row_vector({4.0});
  CHECK(clip_global_norm(s, "", 0.5) == doctest::Approx(5.0));
  CHECK(global_grad_norm(s) == doctest::Approx(0.5));
  CHECK(clip_global_norm(s, "", 10.0) == doctest::Approx(0.5));
}
