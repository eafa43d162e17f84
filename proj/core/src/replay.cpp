#include "owqe/replay.hpp"

#include <algorithm>
#include <string>

#include "owqe/error.hpp"

namespace owqe {

Batch Batch::from(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw ConfigError("empty batch");
  const auto ds = transitions.front().state.size();
  const auto da = transitions.front().action.size();
  const auto n = static_cast<Eigen::Index>(transitions.size());
  Batch b;
  b.states.resize(ds, n);
  b.actions.resize(da, n);
  b.rewards.resize(n);
  b.next_states.resize(ds, n);
  b.not_terminal.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = transitions[static_cast<std::size_t>(j)];
    if (t.state.size() != ds || t.next_state.size() != ds || t.action.size() != da) {
      throw ConfigError("inconsistent transition dimensions in batch");
    }
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards(j) = t.reward;
    b.next_states.col(j) = t.next_state;
    b.not_terminal(j) = t.terminal ? 0.0 : 1.0;
  }
  return b;
}

ReplayBuffer::ReplayBuffer(Eigen::Index state_dim, Eigen::Index action_dim, std::size_t capacity)
    : state_dim_(state_dim), action_dim_(action_dim), capacity_(capacity) {
  if (state_dim <= 0 || action_dim <= 0) throw ConfigError("replay dimensions must be positive");
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
      t.action.size() != action_dim_) {
    throw ConfigError("transition dimensions (" + std::to_string(t.state.size()) + ", " +
                      std::to_string(t.action.size()) + ") do not match buffer (" +
                      std::to_string(state_dim_) + ", " + std::to_string(action_dim_) + ")");
  }
  const auto ds = static_cast<std::size_t>(state_dim_);
  const auto da = static_cast<std::size_t>(action_dim_);
  if (size_ < capacity_ && cursor_ == size_) {
    states_.insert(states_.end(), t.state.data(), t.state.data() + ds);
    actions_.insert(actions_.end(), t.action.data(), t.action.data() + da);
    rewards_.push_back(t.reward);
    next_states_.insert(next_states_.end(), t.next_state.data(), t.next_state.data() + ds);
    terminals_.push_back(t.terminal ? 1 : 0);
  } else {
    std::copy_n(t.state.data(), ds, states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * ds));
    std::copy_n(t.action.data(), da, actions_.begin() + static_cast<std::ptrdiff_t>(cursor_ * da));
    rewards_[cursor_] = t.reward;
    std::copy_n(t.next_state.data(), ds,
                next_states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * ds));
    terminals_[cursor_] = t.terminal ? 1 : 0;
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::size_t ReplayBuffer::slot(std::size_t logical) const {
  // Before wrap-around the oldest entry sits at slot 0; afterwards at the cursor.
  return size_ < capacity_ ? logical : (cursor_ + logical) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay index out of range");
  const auto s = slot(i);
  const auto ds = static_cast<std::size_t>(state_dim_);
  const auto da = static_cast<std::size_t>(action_dim_);
  Transition t;
  t.state = Eigen::Map<const Vector>(states_.data() + s * ds, state_dim_);
  t.action = Eigen::Map<const Vector>(actions_.data() + s * da, action_dim_);
  t.reward = rewards_[s];
  t.next_state = Eigen::Map<const Vector>(next_states_.data() + s * ds, state_dim_);
  t.terminal = terminals_[s] != 0;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch == 0) throw ConfigError("minibatch size must be at least 1");
  if (size_ < batch) {
    throw InsufficientData("replay holds " + std::to_string(size_) + " transitions, need " +
                           std::to_string(batch));
  }
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(batch);
  for (auto i : sample_indices(batch, rng)) out.push_back(at(i));
  return out;
}

Batch ReplayBuffer::sample_batch(std::size_t batch, Rng& rng) const {
  const auto idx = sample_indices(batch, rng);
  const auto n = static_cast<Eigen::Index>(batch);
  const auto ds = static_cast<std::size_t>(state_dim_);
  const auto da = static_cast<std::size_t>(action_dim_);
  Batch b;
  b.states.resize(state_dim_, n);
  b.actions.resize(action_dim_, n);
  b.rewards.resize(n);
  b.next_states.resize(state_dim_, n);
  b.not_terminal.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto s = slot(idx[static_cast<std::size_t>(j)]);
    b.states.col(j) = Eigen::Map<const Vector>(states_.data() + s * ds, state_dim_);
    b.actions.col(j) = Eigen::Map<const Vector>(actions_.data() + s * da, action_dim_);
    b.rewards(j) = rewards_[s];
    b.next_states.col(j) = Eigen::Map<const Vector>(next_states_.data() + s * ds, state_dim_);
    b.not_terminal(j) = terminals_[s] != 0 ? 0.0 : 1.0;
  }
  return b;
}

}  // namespace owqe
