#pragma once

#include <cstddef>
#include <vector>

#include "owqe/nnet.hpp"
#include "owqe/rng.hpp"

namespace owqe {

/// One (s, a, r, s', terminal) tuple. The reward is kept in raw environment
/// units; reward scaling happens inside the critic target.
struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

/// Column-packed minibatch: one transition per column.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector not_terminal;  // 0 for terminal transitions, 1 otherwise

  Eigen::Index size() const { return rewards.size(); }
  static Batch from(const std::vector<Transition>& transitions);
};

/// Fixed-capacity ring of transitions; the oldest entry is overwritten once full.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  ReplayBuffer(Eigen::Index state_dim, Eigen::Index action_dim,
               std::size_t capacity = kDefaultCapacity);

  void push(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  Eigen::Index state_dim() const { return state_dim_; }
  Eigen::Index action_dim() const { return action_dim_; }

  /// Logical index: 0 is the oldest stored transition.
  Transition at(std::size_t i) const;

  /// `batch` indices drawn uniformly with replacement from [0, size).
  /// Throws InsufficientData when size < batch, ConfigError when batch == 0.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;
  Batch sample_batch(std::size_t batch, Rng& rng) const;

 private:
  std::size_t slot(std::size_t logical) const;

  Eigen::Index state_dim_;
  Eigen::Index action_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;  // next slot to write

  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> next_states_;
  std::vector<unsigned char> terminals_;
};

}  // namespace owqe
