#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "owqe/nnet.hpp"

namespace owqe {

struct EnvSpec {
  std::string name;
  Eigen::Index observation_dim = 0;
  Eigen::Index action_dim = 0;
  Vector action_bounds;
  int episode_length = 1;
  double dt = 0.0;

  void validate() const;
};

nlohmann::json to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const nlohmann::json& doc);

struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool terminal = false;  // failure state; the bootstrap term is masked
  bool timeout = false;   // episode_length reached
};

/// Episodic continuous-control environment. Actions are clipped to the
/// declared bounds; episodes are truncated after `episode_length` steps.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset() = 0;
  virtual StepResult step(const Vector& action) = 0;
};

/// sin/cos that are exact at multiples of pi/2, so the resting states
/// (angle pi) produce exactly (cos, sin) = (-1, 0).
double exact_sin(double angle);
double exact_cos(double angle);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Torque-limited pendulum swing-up. Angle 0 is upright; episodes start
/// hanging down at rest. Observation (cos th, sin th, thdot / 8).
class Pendulum final : public Environment {
 public:
  struct Params {
    double mass = 1.0;
    double length = 1.0;
    double gravity = 9.81;
    double damping = 0.05;
    double max_torque = 2.0;
    double max_speed = 8.0;
    double dt = 0.05;
    int episode_length = 200;
  };

  Pendulum();
  explicit Pendulum(Params p);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

  double angle() const { return angle_; }
  double velocity() const { return velocity_; }
  void set_state(double angle, double velocity);
  /// Kinetic plus potential energy, potential measured from the lowest point.
  double energy() const;
  Vector observation() const;
  const Params& params() const { return params_; }

 private:
  Params params_;
  EnvSpec spec_;
  double angle_ = 0.0;
  double velocity_ = 0.0;
  int steps_ = 0;
};

/// Cart-pole swing-up. Pole angle 0 is upright; episodes start with the pole
/// hanging at rest. Leaving the track ends the episode as a failure.
/// Observation (x / 2.4, xdot / 10, cos phi, sin phi, phidot / 10).
class CartPole final : public Environment {
 public:
  struct Params {
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double gravity = 9.81;
    double max_force = 10.0;
    double track_limit = 2.4;
    double max_cart_speed = 10.0;
    double max_pole_speed = 15.0;
    double failure_reward = -1000.0;
    double dt = 0.02;
    int episode_length = 500;
  };

  struct State {
    double x = 0.0;
    double x_dot = 0.0;
    double phi = 0.0;
    double phi_dot = 0.0;
  };

  CartPole();
  explicit CartPole(Params p);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

  const State& state() const { return state_; }
  void set_state(const State& s);
  Vector observation() const;
  const Params& params() const { return params_; }

 private:
  Params params_;
  EnvSpec spec_;
  State state_;
  int steps_ = 0;
};

/// "pendulum" or "cartpole". External environments are built by
/// make_external_environment (external_env.hpp).
std::unique_ptr<Environment> make_environment(const std::string& id);

}  // namespace owqe
