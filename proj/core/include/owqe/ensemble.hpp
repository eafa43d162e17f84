#pragma once

// Online Weighted Q-Ensemble.
//
// Inference: every critic scores every actor's proposed action (the Q-matrix,
// rows = critics, columns = actors). Rows are optionally softmax-normalized,
// combined with the critic weights W = softmax(W_raw) into q_w = W^T Q, and
// the actor with the highest q_w acts.
//
// Training: W_raw descends mean_batch sum_i W_i * delta_i^2, where delta_i is
// critic i's TD error under its own target networks. The TD errors are treated
// as constants, so the critics are only ever trained by their own DDPG loss.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "owqe/agent.hpp"
#include "owqe/envs.hpp"
#include "owqe/metrics.hpp"
#include "owqe/replay.hpp"

namespace owqe {

enum class Strategy { Average, SoftmaxAverage, TDError, SoftmaxTDError };

struct AggregationStrategy {
  Strategy tag = Strategy::SoftmaxTDError;

  bool normalize_q() const { return tag == Strategy::SoftmaxAverage || tag == Strategy::SoftmaxTDError; }
  bool learn_weights() const { return tag == Strategy::TDError || tag == Strategy::SoftmaxTDError; }
};

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);
inline constexpr Strategy kAllStrategies[] = {Strategy::Average, Strategy::SoftmaxAverage,
                                              Strategy::TDError, Strategy::SoftmaxTDError};

struct QMatrix {
  std::vector<Vector> actions;  // a_j = mu_j(s)
  Matrix values;                // values(i, j) = Q_i(s, a_j)
};

class EnsembleWeights {
 public:
  explicit EnsembleWeights(std::size_t n);

  std::size_t size() const { return static_cast<std::size_t>(raw_.size()); }
  const Vector& raw() const { return raw_; }
  const Vector& normalized() const { return normalized_; }
  long step() const { return step_; }

  /// One Adam step on W_raw for the loss sum_i softmax(W_raw)_i * sq_td_i,
  /// given the per-critic mean squared TD errors. Throws NumericError (no
  /// change) on non-finite input.
  void update(const Vector& mean_sq_td, double lr);

  /// Gradient of sum_i w_i c_i with respect to W_raw:
  /// g_k = w_k * sum_i w_i (c_k - c_i). Exactly zero when all c are equal.
  Vector gradient(const Vector& mean_sq_td) const;

  void set_raw(const Vector& raw);

 private:
  Vector raw_;
  Vector normalized_;
  Eigen::ArrayXd m_, v_;
  long step_ = 0;
};

QMatrix build_q_matrix(const std::vector<DdpgAgent>& agents, const Vector& state);

/// Softmax of each critic's row (over actions).
QMatrix normalize_rows(QMatrix m);

/// q_w = W^T M; M is the row-normalized matrix when strategy.normalize_q(),
/// W the learned weights when strategy.learn_weights(), else uniform.
Vector aggregate(const QMatrix& m, const EnsembleWeights& w, AggregationStrategy strategy);

struct Selection {
  Vector action;
  std::size_t index = 0;
};

/// argmax of q_w, ties to the lowest index.
Selection select_action(const QMatrix& m, const Vector& q_w);

/// Per-critic mean over the batch of delta_i^2.
Vector mean_squared_td_errors(const std::vector<DdpgAgent>& agents, const Batch& batch);

void update_weights(EnsembleWeights& w, const std::vector<DdpgAgent>& agents, const Batch& batch,
                    double lr);

/// build -> (normalize) -> aggregate -> select, then optionally adds the OU
/// noise sample to the selected action and clips it to the action bounds.
Selection ensemble_policy_step(const std::vector<DdpgAgent>& agents, const EnsembleWeights& w,
                               AggregationStrategy strategy, const Vector& state, OuNoise* noise,
                               Rng* rng, bool explore);

enum class TrainingMode { Online, Alternate };
std::string_view to_string(TrainingMode m);
TrainingMode training_mode_from_string(std::string_view name);

struct TrainingOptions {
  int observation_steps = 1000;
  double weight_learning_rate = 1e-3;
  int weight_batch_size = 64;
  std::size_t replay_capacity = ReplayBuffer::kDefaultCapacity;
  double noise_theta = 0.15;
  double noise_sigma = 1.0;
};

/// Runs the full protocol on one environment:
///   1. `observation_steps` steps of a uniform random policy fill the shared
///      replay buffer (episodes are restarted on timeout/failure);
///   2. each training episode starts from reset; the behavior action is the
///      ensemble selection plus OU noise (online) or actor `episode % n` plus
///      OU noise (alternate); every step the transition is stored, every agent
///      runs train_step on the shared buffer and, for weight-learning
///      strategies, the weights take one step on a fresh shared minibatch.
///
/// Random streams: observation actions, OU noise and weight minibatches draw
/// from `rng`; agent i trains with its own stream seeded from `rng` at start.
/// An environment fault aborts the run and returns the partial record.
RunRecord run_training(std::vector<DdpgAgent>& agents, EnsembleWeights& weights,
                       AggregationStrategy strategy, Environment& env, TrainingMode mode,
                       int episodes, Rng& rng, const TrainingOptions& options = {});

}  // namespace owqe
