#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "owqe/nnet.hpp"
#include "owqe/replay.hpp"
#include "owqe/rng.hpp"

namespace owqe {

/// One ensemble member's parameterization. Field names follow the
/// hyperparameter table in snake_case.
struct HyperParams {
  double discount = 0.99;
  double reward_scale = 0.01;
  double tau = 0.01;
  int target_update_interval = 100;
  double learning_rate = 1e-3;
  int replay_steps = 64;
  int minibatch_size = 64;
  int layer_size = 50;
  Activation activation = Activation::Relu;

  int minibatches_per_step() const { return replay_steps / minibatch_size; }

  /// Structural checks only (ranges that keep the update rules well defined).
  /// The narrower experiment domains are enforced by the harness.
  void validate() const;

  bool operator==(const HyperParams&) const = default;
};

nlohmann::json to_json(const HyperParams& hp);
HyperParams hyper_params_from_json(const nlohmann::json& doc);

/// Ornstein-Uhlenbeck exploration noise with unit time step:
/// x <- x + theta * (0 - x) + sigma * N(0, 1).
class OuNoise {
 public:
  explicit OuNoise(Eigen::Index dim, double theta = 0.15, double sigma = 1.0);

  void reset() { state_.setZero(); }
  const Vector& step(Rng& rng);

  const Vector& state() const { return state_; }
  void set_state(const Vector& x) { state_ = x; }
  double theta() const { return theta_; }
  double sigma() const { return sigma_; }

 private:
  Vector state_;
  double theta_;
  double sigma_;
};

/// Counters describing what train_step actually did.
struct TrainStats {
  long minibatch_updates = 0;
  long skipped_updates = 0;  // rejected because of non-finite loss/gradients
  long target_updates = 0;
};

/// A DDPG member: actor, critic and their Polyak-averaged targets.
///
/// The actor ends in tanh and is scaled elementwise by the action bounds; the
/// critic takes [state; action / bound] and ends in a linear unit.
class DdpgAgent {
 public:
  DdpgAgent(Eigen::Index observation_dim, Vector action_bounds, HyperParams hyper, Rng& init_rng);

  Eigen::Index observation_dim() const { return observation_dim_; }
  Eigen::Index action_dim() const { return action_bounds_.size(); }
  const Vector& action_bounds() const { return action_bounds_; }
  const HyperParams& hyper() const { return hyper_; }

  Vector act(const Vector& state) const;
  Matrix act_batch(const Matrix& states) const;
  Matrix target_act_batch(const Matrix& states) const;

  double critic_value(const Vector& state, const Vector& action) const;
  /// Q(s, a_j) for every column a_j of `actions`, as a row vector.
  Eigen::RowVectorXd critic_values(const Vector& state, const Matrix& actions) const;

  /// Bootstrap targets y = r * reward_scale + discount * (1 - terminal) * Q'(s', mu'(s')).
  Vector critic_targets(const Batch& batch) const;
  /// TD errors delta = y - Q(s, a) under this agent's own targets.
  Vector td_errors(const Batch& batch) const;

  /// Mean squared critic residual and its gradient with respect to the critic.
  double critic_loss(const Batch& batch, ParamGrads* grads) const;
  /// Gradient with respect to the actor of -mean_s Q(s, mu(s)); the critic is
  /// held fixed.
  ParamGrads actor_gradient(const Batch& batch) const;

  /// One Adam step on the critic; returns the pre-step loss.
  double critic_update(const Batch& batch);
  double critic_update(const std::vector<Transition>& batch) { return critic_update(Batch::from(batch)); }
  void actor_update(const Batch& batch);
  void actor_update(const std::vector<Transition>& batch) { actor_update(Batch::from(batch)); }

  void soft_target_update();

  /// replay_steps / minibatch_size critic+actor updates on fresh minibatches,
  /// then the periodic soft target update. No-op when the buffer holds fewer
  /// than minibatch_size transitions.
  TrainStats train_step(const ReplayBuffer& buffer, Rng& rng);

  long step_count() const { return step_count_; }
  const TrainStats& totals() const { return totals_; }

  const MlpParams& actor() const { return actor_; }
  const MlpParams& critic() const { return critic_; }
  const MlpParams& target_actor() const { return target_actor_; }
  const MlpParams& target_critic() const { return target_critic_; }

  /// Replaces a network. Shapes must match the existing one; optimizer state
  /// is reset for the replaced main network.
  void set_actor(MlpParams p);
  void set_critic(MlpParams p);
  void set_target_actor(MlpParams p);
  void set_target_critic(MlpParams p);

  nlohmann::json checkpoint() const;
  static DdpgAgent from_checkpoint(const nlohmann::json& doc);

 private:
  DdpgAgent() = default;
  Matrix critic_input(const Matrix& states, const Matrix& actions) const;
  void check_finite() const;

  Eigen::Index observation_dim_ = 0;
  Vector action_bounds_;
  HyperParams hyper_;
  MlpParams actor_, critic_, target_actor_, target_critic_;
  AdamState actor_adam_, critic_adam_;
  long step_count_ = 0;
  TrainStats totals_;
};

}  // namespace owqe
