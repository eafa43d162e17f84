#include "owqe/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "owqe/error.hpp"
#include "owqe/external_env.hpp"

namespace owqe {

namespace {

constexpr double kPi = std::numbers::pi;

// Classic fourth-order Runge-Kutta on a fixed-size state.
template <std::size_t N, typename F>
std::array<double, N> rk4(const std::array<double, N>& y, double h, F&& deriv) {
  auto axpy = [](const std::array<double, N>& a, double s, const std::array<double, N>& b) {
    std::array<double, N> r{};
    for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  const auto k1 = deriv(y);
  const auto k2 = deriv(axpy(y, h / 2, k1));
  const auto k3 = deriv(axpy(y, h / 2, k2));
  const auto k4 = deriv(axpy(y, h, k3));
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

double clip(double v, double bound) { return std::clamp(v, -bound, bound); }

double clipped_action(const Vector& action, const EnvSpec& spec) {
  if (action.size() != spec.action_dim) throw ConfigError("action dimension mismatch");
  if (!action.allFinite()) throw ConfigError("non-finite action");
  return clip(action(0), spec.action_bounds(0));
}

}  // namespace

void EnvSpec::validate() const {
  if (observation_dim <= 0 || action_dim <= 0) throw ConfigError("environment dimensions must be positive");
  if (action_bounds.size() != action_dim) throw ConfigError("action bounds length must equal action_dim");
  if (!(action_bounds.array() > 0.0).all()) throw ConfigError("action bounds must be strictly positive");
  if (episode_length < 1) throw ConfigError("episode_length must be >= 1");
}

nlohmann::json to_json(const EnvSpec& spec) {
  return {{"name", spec.name},
          {"observation_dim", spec.observation_dim},
          {"action_dim", spec.action_dim},
          {"action_bounds", std::vector<double>(spec.action_bounds.data(),
                                                spec.action_bounds.data() + spec.action_bounds.size())},
          {"episode_length", spec.episode_length},
          {"dt", spec.dt}};
}

EnvSpec env_spec_from_json(const nlohmann::json& doc) {
  EnvSpec s;
  try {
    s.name = doc.value("name", std::string("external"));
    s.observation_dim = doc.at("observation_dim").get<Eigen::Index>();
    s.action_dim = doc.at("action_dim").get<Eigen::Index>();
    const auto b = doc.at("action_bounds").get<std::vector<double>>();
    s.action_bounds = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    s.episode_length = doc.at("episode_length").get<int>();
    s.dt = doc.value("dt", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed environment spec: ") + e.what());
  }
  s.validate();
  return s;
}

double wrap_angle(double angle) {
  double a = std::fmod(angle + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  a -= kPi;
  // fmod maps +pi to -pi; the interval is closed at +pi.
  return a == -kPi ? kPi : a;
}

double exact_sin(double angle) {
  const double a = wrap_angle(angle);
  if (a > kPi / 2) return std::sin(kPi - a);
  if (a < -kPi / 2) return std::sin(-kPi - a);
  return std::sin(a);
}

double exact_cos(double angle) {
  const double a = wrap_angle(angle);
  if (a > kPi / 2) return -std::cos(kPi - a);
  if (a < -kPi / 2) return -std::cos(-kPi - a);
  return std::cos(a);
}

// ---------------------------------------------------------------------------

Pendulum::Pendulum() : Pendulum(Params{}) {}

Pendulum::Pendulum(Params p) : params_(p) {
  spec_.name = "pendulum";
  spec_.observation_dim = 3;
  spec_.action_dim = 1;
  spec_.action_bounds = Vector::Constant(1, p.max_torque);
  spec_.episode_length = p.episode_length;
  spec_.dt = p.dt;
  spec_.validate();
  reset();
}

Vector Pendulum::observation() const {
  Vector o(3);
  o << exact_cos(angle_), exact_sin(angle_), velocity_ / params_.max_speed;
  return o;
}

Vector Pendulum::reset() {
  angle_ = kPi;
  velocity_ = 0.0;
  steps_ = 0;
  return observation();
}

void Pendulum::set_state(double angle, double velocity) {
  angle_ = angle;
  velocity_ = velocity;
}

double Pendulum::energy() const {
  const auto& p = params_;
  return 0.5 * p.mass * p.length * p.length * velocity_ * velocity_ +
         p.mass * p.gravity * p.length * (1.0 + exact_cos(angle_));
}

StepResult Pendulum::step(const Vector& action) {
  const double u = clipped_action(action, spec_);
  const auto& p = params_;
  const double inertia = p.mass * p.length * p.length;
  auto deriv = [&](const std::array<double, 2>& y) {
    const double acc = (p.mass * p.gravity * p.length * exact_sin(y[0]) - p.damping * y[1] + u) / inertia;
    return std::array<double, 2>{y[1], acc};
  };
  const auto next = rk4<2>({angle_, velocity_}, p.dt, deriv);
  angle_ = wrap_angle(next[0]);
  velocity_ = clip(next[1], p.max_speed);
  if (!std::isfinite(angle_) || !std::isfinite(velocity_)) throw EnvironmentFault("pendulum state became non-finite");
  ++steps_;

  StepResult r;
  r.observation = observation();
  r.reward = -(angle_ * angle_ + 0.1 * velocity_ * velocity_ + 0.001 * u * u);
  r.terminal = false;
  r.timeout = steps_ >= p.episode_length;
  return r;
}

// ---------------------------------------------------------------------------

CartPole::CartPole() : CartPole(Params{}) {}

CartPole::CartPole(Params p) : params_(p) {
  spec_.name = "cartpole";
  spec_.observation_dim = 5;
  spec_.action_dim = 1;
  spec_.action_bounds = Vector::Constant(1, p.max_force);
  spec_.episode_length = p.episode_length;
  spec_.dt = p.dt;
  spec_.validate();
  reset();
}

Vector CartPole::observation() const {
  Vector o(5);
  o << state_.x / params_.track_limit, state_.x_dot / 10.0, exact_cos(state_.phi),
      exact_sin(state_.phi), state_.phi_dot / 10.0;
  return o;
}

Vector CartPole::reset() {
  state_ = State{0.0, 0.0, kPi, 0.0};
  steps_ = 0;
  return observation();
}

void CartPole::set_state(const State& s) { state_ = s; }

StepResult CartPole::step(const Vector& action) {
  const double force = clipped_action(action, spec_);
  const auto& p = params_;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_ml = p.pole_mass * p.half_length;
  auto deriv = [&](const std::array<double, 4>& y) {
    const double s = exact_sin(y[2]);
    const double c = exact_cos(y[2]);
    const double temp = (force + pole_ml * y[3] * y[3] * s) / total_mass;
    const double phi_acc =
        (p.gravity * s - c * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * c * c / total_mass));
    const double x_acc = temp - pole_ml * phi_acc * c / total_mass;
    return std::array<double, 4>{y[1], x_acc, y[3], phi_acc};
  };
  const auto next = rk4<4>({state_.x, state_.x_dot, state_.phi, state_.phi_dot}, p.dt, deriv);
  state_.x = next[0];
  state_.x_dot = clip(next[1], p.max_cart_speed);
  state_.phi = wrap_angle(next[2]);
  state_.phi_dot = clip(next[3], p.max_pole_speed);
  for (double v : next)
    if (!std::isfinite(v)) throw EnvironmentFault("cart-pole state became non-finite");
  ++steps_;

  StepResult r;
  r.terminal = std::abs(state_.x) > p.track_limit;
  r.reward = r.terminal ? p.failure_reward : exact_cos(state_.phi) - 0.01 * state_.x * state_.x;
  r.observation = observation();
  r.timeout = !r.terminal && steps_ >= p.episode_length;
  return r;
}

std::unique_ptr<Environment> make_environment(const std::string& id) {
  if (id == "pendulum") return std::make_unique<Pendulum>();
  if (id == "cartpole" || id == "cart-pole") return std::make_unique<CartPole>();
  if (id.rfind("external:", 0) == 0) return make_external_environment(id.substr(9));
  throw ConfigError("unknown environment '" + id + "' (expected pendulum, cartpole or external:<command>)");
}

}  // namespace owqe
