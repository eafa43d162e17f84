#include "owqe/ensemble.hpp"

#include <cmath>

#include "owqe/error.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace owqe {

namespace {

// Softmax layers push activations into the subnormal range, which is very slow
// on x86. Flush-to-zero/denormals-are-zero for the duration of a run.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Average: return "Average";
    case Strategy::SoftmaxAverage: return "SoftmaxAverage";
    case Strategy::TDError: return "TDError";
    case Strategy::SoftmaxTDError: return "SoftmaxTDError";
  }
  return "Average";
}

Strategy strategy_from_string(std::string_view name) {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected Average, SoftmaxAverage, TDError or SoftmaxTDError)");
}

std::string_view to_string(TrainingMode m) { return m == TrainingMode::Online ? "online" : "alternate"; }

TrainingMode training_mode_from_string(std::string_view name) {
  if (name == "online") return TrainingMode::Online;
  if (name == "alternate") return TrainingMode::Alternate;
  throw ConfigError("unknown training mode '" + std::string(name) + "' (expected online or alternate)");
}

// ---------------------------------------------------------------------------

EnsembleWeights::EnsembleWeights(std::size_t n) {
  if (n == 0) throw ConfigError("ensemble needs at least one member");
  const auto size = static_cast<Eigen::Index>(n);
  raw_ = Vector::Zero(size);
  normalized_ = softmax(raw_);
  m_ = Eigen::ArrayXd::Zero(size);
  v_ = Eigen::ArrayXd::Zero(size);
}

void EnsembleWeights::set_raw(const Vector& raw) {
  if (raw.size() != raw_.size()) throw ConfigError("weight vector size mismatch");
  raw_ = raw;
  normalized_ = softmax(raw_);
}

Vector EnsembleWeights::gradient(const Vector& mean_sq_td) const {
  if (mean_sq_td.size() != raw_.size()) throw ConfigError("TD error vector size mismatch");
  const auto n = raw_.size();
  Vector g(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += normalized_(i) * (mean_sq_td(k) - mean_sq_td(i));
    g(k) = normalized_(k) * acc;
  }
  return g;
}

void EnsembleWeights::update(const Vector& mean_sq_td, double lr) {
  if (!(lr > 0.0)) throw ConfigError("weight learning rate must be positive");
  if (!mean_sq_td.allFinite()) throw NumericError("non-finite TD error; weight update skipped");
  const Eigen::ArrayXd g = gradient(mean_sq_td).array();
  ++step_;
  adam_update(raw_.array(), g, m_, v_, step_, lr, 0.9, 0.999, 1e-8);
  normalized_ = softmax(raw_);
}

// ---------------------------------------------------------------------------

QMatrix build_q_matrix(const std::vector<DdpgAgent>& agents, const Vector& state) {
  if (agents.empty()) throw ConfigError("empty ensemble");
  const auto n = static_cast<Eigen::Index>(agents.size());
  const auto ds = agents.front().observation_dim();
  const auto da = agents.front().action_dim();
  for (const auto& a : agents) {
    if (a.observation_dim() != ds || a.action_dim() != da) {
      throw ConfigError("ensemble members disagree on observation/action dimensions");
    }
  }
  QMatrix m;
  Matrix actions(da, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m.actions.push_back(agents[static_cast<std::size_t>(j)].act(state));
    actions.col(j) = m.actions.back();
  }
  m.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.values.row(i) = agents[static_cast<std::size_t>(i)].critic_values(state, actions);
  }
  return m;
}

QMatrix normalize_rows(QMatrix m) {
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    m.values.row(i) = softmax(m.values.row(i).transpose()).transpose();
  }
  return m;
}

Vector aggregate(const QMatrix& m, const EnsembleWeights& w, AggregationStrategy strategy) {
  const auto n = m.values.rows();
  if (m.values.cols() != n || static_cast<Eigen::Index>(w.size()) != n) {
    throw ConfigError("Q-matrix and weights disagree on ensemble size");
  }
  const Vector weights =
      strategy.learn_weights() ? w.normalized() : Vector::Constant(n, 1.0 / static_cast<double>(n));
  if (strategy.normalize_q()) return normalize_rows(m).values.transpose() * weights;
  return m.values.transpose() * weights;
}

Selection select_action(const QMatrix& m, const Vector& q_w) {
  if (q_w.size() == 0 || static_cast<std::size_t>(q_w.size()) != m.actions.size()) {
    throw ConfigError("aggregated values do not match the proposed actions");
  }
  if (!q_w.allFinite()) throw NumericError("non-finite aggregated Q-values");
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < q_w.size(); ++j) {
    if (q_w(j) > q_w(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
  }
  return {m.actions[best], best};
}

Vector mean_squared_td_errors(const std::vector<DdpgAgent>& agents, const Batch& batch) {
  if (batch.size() == 0) throw ConfigError("empty batch");
  Vector out(static_cast<Eigen::Index>(agents.size()));
  for (std::size_t i = 0; i < agents.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = agents[i].td_errors(batch).squaredNorm() / static_cast<double>(batch.size());
  }
  return out;
}

void update_weights(EnsembleWeights& w, const std::vector<DdpgAgent>& agents, const Batch& batch,
                    double lr) {
  if (w.size() != agents.size()) throw ConfigError("weights and agents disagree on ensemble size");
  w.update(mean_squared_td_errors(agents, batch), lr);
}

Selection ensemble_policy_step(const std::vector<DdpgAgent>& agents, const EnsembleWeights& w,
                               AggregationStrategy strategy, const Vector& state, OuNoise* noise,
                               Rng* rng, bool explore) {
  const QMatrix m = build_q_matrix(agents, state);
  Selection sel = select_action(m, aggregate(m, w, strategy));
  if (explore) {
    if (!noise || !rng) throw ConfigError("exploration requires a noise process and a generator");
    const Vector& bounds = agents.front().action_bounds();
    sel.action = (sel.action + noise->step(*rng)).cwiseMax(-bounds).cwiseMin(bounds);
  }
  return sel;
}

// ---------------------------------------------------------------------------

RunRecord run_training(std::vector<DdpgAgent>& agents, EnsembleWeights& weights,
                       AggregationStrategy strategy, Environment& env, TrainingMode mode,
                       int episodes, Rng& rng, const TrainingOptions& options) {
  if (agents.empty()) throw ConfigError("empty ensemble");
  if (weights.size() != agents.size()) throw ConfigError("weights and agents disagree on ensemble size");
  if (episodes < 0) throw ConfigError("episode count must be non-negative");
  const EnvSpec& spec = env.spec();
  for (const auto& a : agents) {
    if (a.observation_dim() != spec.observation_dim || a.action_dim() != spec.action_dim) {
      throw ConfigError("agent dimensions do not match environment '" + spec.name + "'");
    }
  }

  const FlushDenormals flush;
  const std::size_t n = agents.size();
  std::vector<Rng> agent_rngs;
  agent_rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) agent_rngs.emplace_back(rng());

  ReplayBuffer buffer(spec.observation_dim, spec.action_dim, options.replay_capacity);
  OuNoise noise(spec.action_dim, options.noise_theta, options.noise_sigma);
  RunRecord record;

  auto store = [&](const Vector& s, const Vector& a, const StepResult& r) {
    buffer.push(Transition{s, a, r.reward, r.observation, r.terminal});
  };

  try {
    // Observation phase: uniform random actions, no learning.
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Vector obs = env.reset();
    for (int t = 0; t < options.observation_steps; ++t) {
      Vector a(spec.action_dim);
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = spec.action_bounds(k) * unit(rng);
      const StepResult r = env.step(a);
      store(obs, a, r);
      ++record.observation_steps;
      obs = (r.terminal || r.timeout) ? env.reset() : r.observation;
    }

    for (int ep = 0; ep < episodes; ++ep) {
      obs = env.reset();
      noise.reset();
      std::vector<long> counts(n, 0);
      double total = 0.0;
      int length = 0;
      const int actor = mode == TrainingMode::Alternate ? static_cast<int>(ep % static_cast<int>(n)) : -1;
      for (;;) {
        Vector a;
        if (mode == TrainingMode::Online) {
          const Selection sel = ensemble_policy_step(agents, weights, strategy, obs, &noise, &rng, true);
          a = sel.action;
          ++counts[sel.index];
        } else {
          const auto& member = agents[static_cast<std::size_t>(actor)];
          const Vector& bounds = member.action_bounds();
          a = (member.act(obs) + noise.step(rng)).cwiseMax(-bounds).cwiseMin(bounds);
          ++counts[static_cast<std::size_t>(actor)];
        }
        const StepResult r = env.step(a);
        store(obs, a, r);
        total += r.reward;
        ++length;

        for (std::size_t i = 0; i < n; ++i) agents[i].train_step(buffer, agent_rngs[i]);
        if (strategy.learn_weights() &&
            buffer.size() >= static_cast<std::size_t>(options.weight_batch_size)) {
          const Batch batch = buffer.sample_batch(static_cast<std::size_t>(options.weight_batch_size), rng);
          try {
            update_weights(weights, agents, batch, options.weight_learning_rate);
          } catch (const NumericError&) {
            // step skipped; weights unchanged
          }
        }

        if (r.terminal || r.timeout) break;
        obs = r.observation;
      }
      record.episode_rewards.push_back(total);
      record.episode_lengths.push_back(length);
      record.action_counts.push_back(std::move(counts));
      record.behavior_actor.push_back(actor);
      const Vector& w = weights.normalized();
      record.weights.emplace_back(w.data(), w.data() + w.size());
    }
  } catch (const EnvironmentFault& e) {
    record.aborted = true;
    record.error = e.what();
  }
  return record;
}

}  // namespace owqe
