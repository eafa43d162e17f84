#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "owqe/envs.hpp"
#include "owqe/error.hpp"

using namespace owqe;

namespace {

constexpr double kPi = std::numbers::pi;

Vector scalar(double u) { return Vector::Constant(1, u); }

}  // namespace

TEST_CASE("trig helpers are exact at the rest angle") {
  CHECK(exact_cos(kPi) == -1.0);
  CHECK(exact_sin(kPi) == 0.0);
  CHECK(exact_sin(0.0) == 0.0);
  CHECK(exact_cos(0.0) == 1.0);
  CHECK(exact_sin(-kPi) == 0.0);
  Rng rng(1);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  for (int k = 0; k < 1000; ++k) {
    const double x = d(rng);
    CHECK(exact_sin(x) == doctest::Approx(std::sin(x)).epsilon(1e-12));
    CHECK(exact_cos(x) == doctest::Approx(std::cos(x)).epsilon(1e-12));
    const double w = wrap_angle(x);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(std::abs(std::remainder(w - x, 2 * kPi)) < 1e-9);
  }
  CHECK(wrap_angle(kPi) == kPi);
  CHECK(wrap_angle(-kPi) == kPi);
}

TEST_CASE("pendulum: reset observation and rest state") {
  Pendulum env;
  const Vector obs = env.reset();
  REQUIRE(obs.size() == 3);
  CHECK(obs(0) == -1.0);
  CHECK(obs(1) == 0.0);
  CHECK(obs(2) == 0.0);
  for (int k = 0; k < 50; ++k) {
    const StepResult r = env.step(scalar(0.0));
    CHECK(env.angle() == kPi);
    CHECK(env.velocity() == 0.0);
    CHECK(r.reward == -kPi * kPi);
    CHECK(r.observation == obs);
  }
}

TEST_CASE("pendulum: undamped free swing conserves energy under RK4") {
  Pendulum::Params p;
  p.damping = 0.0;
  p.episode_length = 5000;
  for (double start : {2.5, 1.0, -0.3}) {
    Pendulum env(p);
    env.set_state(start, 0.0);
    const double e0 = env.energy();
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      env.step(scalar(0.0));
      worst = std::max(worst, std::abs(env.energy() - e0) / e0);
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("pendulum: episode bookkeeping, clipping and reward bound") {
  Pendulum a, b;
  a.reset();
  b.reset();
  CHECK(a.step(scalar(2.0)).observation == b.step(scalar(50.0)).observation);
  CHECK(a.step(scalar(-2.0)).observation == b.step(scalar(-7.0)).observation);
  a.reset();
  Rng rng(2);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  for (int k = 1; k <= 200; ++k) {
    const double u = d(rng);
    const StepResult ra = a.step(scalar(u));
    CHECK(ra.reward <= 0.0);
    CHECK_FALSE(ra.terminal);
    CHECK(ra.timeout == (k == 200));
    CHECK(std::abs(ra.observation(0) * ra.observation(0) + ra.observation(1) * ra.observation(1) - 1.0) < 1e-12);
    CHECK(std::abs(a.velocity()) <= 8.0);
  }
  CHECK_THROWS_AS(a.step(Vector::Zero(2)), ConfigError);
}

TEST_CASE("cart-pole: reset observation and rest state") {
  CartPole env;
  const Vector obs = env.reset();
  REQUIRE(obs.size() == 5);
  Vector expected(5);
  expected << 0, 0, -1, 0, 0;
  CHECK(obs == expected);
  for (int k = 0; k < 100; ++k) {
    const StepResult r = env.step(scalar(0.0));
    CHECK(r.observation == expected);
    CHECK(r.reward == -1.0);
  }
}

TEST_CASE("cart-pole: leaving the track is a failure") {
  CartPole env;
  env.reset();
  StepResult r;
  int steps = 0;
  do {
    r = env.step(scalar(10.0));
    ++steps;
  } while (!r.terminal && !r.timeout);
  CHECK(r.terminal);
  CHECK_FALSE(r.timeout);
  CHECK(steps < 500);
  CHECK(r.reward == env.params().failure_reward);
  CHECK(std::abs(env.state().x) > 2.4);
}

TEST_CASE("cart-pole: timeout after the episode length") {
  CartPole env;
  env.reset();
  for (int k = 1; k <= 500; ++k) {
    const double u = 2.0 * std::sin(0.05 * k) - 4.0 * env.state().x - 4.0 * env.state().x_dot;
    const StepResult r = env.step(scalar(u));
    REQUIRE_FALSE(r.terminal);
    CHECK(r.timeout == (k == 500));
    CHECK(r.reward <= 1.0);
  }
}

TEST_CASE("environments are exactly deterministic") {
  for (const char* id : {"pendulum", "cartpole"}) {
    auto a = make_environment(id);
    auto b = make_environment(id);
    Rng rng(3);
    std::normal_distribution<double> d(0.0, 5.0);
    Vector oa = a->reset(), ob = b->reset();
    CHECK(oa == ob);
    for (int k = 0; k < 2000; ++k) {
      const Vector u = scalar(d(rng));
      const StepResult ra = a->step(u);
      const StepResult rb = b->step(u);
      CHECK(ra.observation == rb.observation);
      CHECK(ra.reward == rb.reward);
      CHECK(ra.terminal == rb.terminal);
      if (ra.terminal || ra.timeout) {
        a->reset();
        b->reset();
      }
    }
  }
}

TEST_CASE("environment ids and specs") {
  CHECK_THROWS_AS(make_environment("acrobot"), ConfigError);
  auto env = make_environment("cartpole");
  const EnvSpec& spec = env->spec();
  CHECK(spec.observation_dim == 5);
  CHECK(spec.action_bounds(0) == 10.0);
  CHECK(spec.episode_length == 500);
  const EnvSpec back = env_spec_from_json(to_json(spec));
  CHECK(back.name == spec.name);
  CHECK(back.action_bounds == spec.action_bounds);
  CHECK(back.dt == spec.dt);
  EnvSpec bad = spec;
  bad.action_bounds(0) = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.episode_length = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
