#include "owqe/agent.hpp"

#include <cmath>

#include "owqe/error.hpp"

namespace owqe {

namespace {

void require_same_shape(const MlpParams& a, const MlpParams& b, const char* what) {
  if (a.layers.size() != b.layers.size()) throw ConfigError(std::string(what) + ": depth mismatch");
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weight.rows() != b.layers[k].weight.rows() ||
        a.layers[k].weight.cols() != b.layers[k].weight.cols() ||
        a.layers[k].activation != b.layers[k].activation) {
      throw ConfigError(std::string(what) + ": layer " + std::to_string(k) + " shape mismatch");
    }
  }
}

void blend(MlpParams& target, const MlpParams& source, double tau) {
  for (std::size_t k = 0; k < target.layers.size(); ++k) {
    auto& t = target.layers[k];
    const auto& s = source.layers[k];
    t.weight = (1.0 - tau) * t.weight + tau * s.weight;
    t.bias = (1.0 - tau) * t.bias + tau * s.bias;
  }
}

bool finite(const MlpParams& p) {
  for (const auto& l : p.layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

}  // namespace

void HyperParams::validate() const {
  if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("discount", "must lie in [0, 1)");
  if (!(reward_scale > 0.0)) throw ValidationError("reward_scale", "must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau", "must lie in (0, 1]");
  if (target_update_interval < 1) throw ValidationError("target_update_interval", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate", "must be positive");
  if (minibatch_size < 1) throw ValidationError("minibatch_size", "must be >= 1");
  if (replay_steps < minibatch_size || replay_steps % minibatch_size != 0) {
    throw ValidationError("replay_steps", "must be a positive multiple of minibatch_size (" +
                                              std::to_string(minibatch_size) + ")");
  }
  if (layer_size < 1) throw ValidationError("layer_size", "must be >= 1");
}

nlohmann::json to_json(const HyperParams& hp) {
  return {{"discount", hp.discount},
          {"reward_scale", hp.reward_scale},
          {"tau", hp.tau},
          {"target_update_interval", hp.target_update_interval},
          {"learning_rate", hp.learning_rate},
          {"replay_steps", hp.replay_steps},
          {"minibatch_size", hp.minibatch_size},
          {"layer_size", hp.layer_size},
          {"activation", std::string(to_string(hp.activation))}};
}

HyperParams hyper_params_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("member", "hyperparameters must be a JSON object");
  static const char* known[] = {"discount",      "reward_scale",   "tau",
                                "target_update_interval",          "learning_rate",
                                "replay_steps",  "minibatch_size", "layer_size",
                                "activation",    "label"};
  for (const auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(key, "unknown hyperparameter field");
  }
  HyperParams hp;
  auto number = [&](const char* key, double& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number()) throw ValidationError(key, "expected a number");
    out = doc[key].get<double>();
  };
  auto integer = [&](const char* key, int& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number_integer()) throw ValidationError(key, "expected an integer");
    out = doc[key].get<int>();
  };
  number("discount", hp.discount);
  number("reward_scale", hp.reward_scale);
  number("tau", hp.tau);
  integer("target_update_interval", hp.target_update_interval);
  number("learning_rate", hp.learning_rate);
  integer("replay_steps", hp.replay_steps);
  integer("minibatch_size", hp.minibatch_size);
  integer("layer_size", hp.layer_size);
  if (doc.contains("activation")) {
    if (!doc["activation"].is_string()) throw ValidationError("activation", "expected a string");
    const auto name = doc["activation"].get<std::string>();
    if (name != "relu" && name != "softmax") {
      throw ValidationError("activation", "must be \"relu\" or \"softmax\", got \"" + name + "\"");
    }
    hp.activation = activation_from_string(name);
  }
  return hp;
}

OuNoise::OuNoise(Eigen::Index dim, double theta, double sigma)
    : state_(Vector::Zero(dim)), theta_(theta), sigma_(sigma) {
  if (dim <= 0) throw ConfigError("noise dimension must be positive");
}

const Vector& OuNoise::step(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < state_.size(); ++i) {
    state_(i) += theta_ * (0.0 - state_(i)) + sigma_ * normal(rng);
  }
  return state_;
}

DdpgAgent::DdpgAgent(Eigen::Index observation_dim, Vector action_bounds, HyperParams hyper,
                     Rng& init_rng)
    : observation_dim_(observation_dim), action_bounds_(std::move(action_bounds)), hyper_(hyper) {
  hyper_.validate();
  if (observation_dim_ <= 0 || action_bounds_.size() == 0) {
    throw ConfigError("agent needs positive observation and action dimensions");
  }
  if (!(action_bounds_.array() > 0.0).all()) throw ConfigError("action bounds must be positive");
  const int ds = static_cast<int>(observation_dim_);
  const int da = static_cast<int>(action_bounds_.size());
  const int width = hyper_.layer_size;
  actor_ = make_mlp({ds, width, width, da}, hyper_.activation, Activation::Tanh, init_rng);
  critic_ = make_mlp({ds + da, width, width, 1}, hyper_.activation, Activation::Linear, init_rng);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_adam_ = AdamState::for_params(actor_);
  critic_adam_ = AdamState::for_params(critic_);
}

Matrix DdpgAgent::critic_input(const Matrix& states, const Matrix& actions) const {
  if (states.rows() != observation_dim_ || actions.rows() != action_dim() ||
      states.cols() != actions.cols()) {
    throw ConfigError("state/action shapes do not match the agent");
  }
  Matrix x(observation_dim_ + action_dim(), states.cols());
  x.topRows(observation_dim_) = states;
  x.bottomRows(action_dim()) = action_bounds_.cwiseInverse().asDiagonal() * actions;
  return x;
}

Vector DdpgAgent::act(const Vector& state) const {
  if (state.size() != observation_dim_) throw ConfigError("state dimension mismatch");
  return action_bounds_.cwiseProduct(forward(actor_, state));
}

Matrix DdpgAgent::act_batch(const Matrix& states) const {
  return action_bounds_.asDiagonal() * forward_batch(actor_, states);
}

Matrix DdpgAgent::target_act_batch(const Matrix& states) const {
  return action_bounds_.asDiagonal() * forward_batch(target_actor_, states);
}

double DdpgAgent::critic_value(const Vector& state, const Vector& action) const {
  return forward(critic_, critic_input(state, action))(0);
}

Eigen::RowVectorXd DdpgAgent::critic_values(const Vector& state, const Matrix& actions) const {
  if (state.size() != observation_dim_) throw ConfigError("state dimension mismatch");
  const Matrix states = state.replicate(1, actions.cols());
  return forward_batch(critic_, critic_input(states, actions)).row(0);
}

Vector DdpgAgent::critic_targets(const Batch& batch) const {
  const Matrix next_actions = target_act_batch(batch.next_states);
  const Vector next_q =
      forward_batch(target_critic_, critic_input(batch.next_states, next_actions)).row(0).transpose();
  return hyper_.reward_scale * batch.rewards +
         hyper_.discount * batch.not_terminal.cwiseProduct(next_q);
}

Vector DdpgAgent::td_errors(const Batch& batch) const {
  const Vector q =
      forward_batch(critic_, critic_input(batch.states, batch.actions)).row(0).transpose();
  return critic_targets(batch) - q;
}

double DdpgAgent::critic_loss(const Batch& batch, ParamGrads* grads) const {
  if (batch.size() == 0) throw ConfigError("empty batch");
  const Vector y = critic_targets(batch);
  Tape tape;
  const Matrix q = forward_batch(critic_, critic_input(batch.states, batch.actions), &tape);
  const Eigen::RowVectorXd residual = q.row(0) - y.transpose();
  const double n = static_cast<double>(batch.size());
  const double loss = residual.squaredNorm() / n;
  if (!std::isfinite(loss)) throw NumericError("non-finite critic loss");
  if (grads) backward_batch(critic_, tape, (2.0 / n) * residual, grads);
  return loss;
}

ParamGrads DdpgAgent::actor_gradient(const Batch& batch) const {
  if (batch.size() == 0) throw ConfigError("empty batch");
  Tape actor_tape;
  const Matrix squashed = forward_batch(actor_, batch.states, &actor_tape);
  const Matrix actions = action_bounds_.asDiagonal() * squashed;
  Tape critic_tape;
  forward_batch(critic_, critic_input(batch.states, actions), &critic_tape);
  const double n = static_cast<double>(batch.size());
  // Ascent on mean Q is descent on -mean Q.
  const Eigen::RowVectorXd upstream = Eigen::RowVectorXd::Constant(batch.size(), -1.0 / n);
  const Matrix input_grad = backward_batch(critic_, critic_tape, upstream, nullptr);
  // The critic sees a / bound = squashed, so the bound cancels in the chain rule.
  const Matrix action_grad = input_grad.bottomRows(action_dim());
  ParamGrads grads = ParamGrads::zeros_like(actor_);
  backward_batch(actor_, actor_tape, action_grad, &grads);
  return grads;
}

double DdpgAgent::critic_update(const Batch& batch) {
  ParamGrads grads = ParamGrads::zeros_like(critic_);
  const double loss = critic_loss(batch, &grads);
  adam_step(critic_, grads, critic_adam_, hyper_.learning_rate);
  check_finite();
  return loss;
}

void DdpgAgent::actor_update(const Batch& batch) {
  adam_step(actor_, actor_gradient(batch), actor_adam_, hyper_.learning_rate);
  check_finite();
}

void DdpgAgent::soft_target_update() {
  blend(target_critic_, critic_, hyper_.tau);
  blend(target_actor_, actor_, hyper_.tau);
}

TrainStats DdpgAgent::train_step(const ReplayBuffer& buffer, Rng& rng) {
  TrainStats stats;
  const auto mb = static_cast<std::size_t>(hyper_.minibatch_size);
  if (buffer.size() < mb) return stats;
  for (int k = 0; k < hyper_.minibatches_per_step(); ++k) {
    const Batch batch = buffer.sample_batch(mb, rng);
    try {
      critic_update(batch);
      actor_update(batch);
      ++stats.minibatch_updates;
    } catch (const NumericError&) {
      ++stats.skipped_updates;
    }
  }
  ++step_count_;
  if (step_count_ % hyper_.target_update_interval == 0) {
    soft_target_update();
    ++stats.target_updates;
  }
  totals_.minibatch_updates += stats.minibatch_updates;
  totals_.skipped_updates += stats.skipped_updates;
  totals_.target_updates += stats.target_updates;
  return stats;
}

void DdpgAgent::check_finite() const {
  if (!finite(actor_) || !finite(critic_)) throw NumericError("network parameters became non-finite");
}

void DdpgAgent::set_actor(MlpParams p) {
  require_same_shape(actor_, p, "actor");
  actor_ = std::move(p);
  actor_adam_ = AdamState::for_params(actor_);
}

void DdpgAgent::set_critic(MlpParams p) {
  require_same_shape(critic_, p, "critic");
  critic_ = std::move(p);
  critic_adam_ = AdamState::for_params(critic_);
}

void DdpgAgent::set_target_actor(MlpParams p) {
  require_same_shape(target_actor_, p, "target actor");
  target_actor_ = std::move(p);
}

void DdpgAgent::set_target_critic(MlpParams p) {
  require_same_shape(target_critic_, p, "target critic");
  target_critic_ = std::move(p);
}

nlohmann::json DdpgAgent::checkpoint() const {
  return {{"observation_dim", observation_dim_},
          {"action_bounds",
           std::vector<double>(action_bounds_.data(), action_bounds_.data() + action_bounds_.size())},
          {"hyper", to_json(hyper_)},
          {"step", step_count_},
          {"actor", to_json(actor_)},
          {"critic", to_json(critic_)},
          {"target_actor", to_json(target_actor_)},
          {"target_critic", to_json(target_critic_)}};
}

DdpgAgent DdpgAgent::from_checkpoint(const nlohmann::json& doc) {
  DdpgAgent a;
  try {
    a.observation_dim_ = doc.at("observation_dim").get<Eigen::Index>();
    const auto bounds = doc.at("action_bounds").get<std::vector<double>>();
    a.action_bounds_ = Eigen::Map<const Vector>(bounds.data(), static_cast<Eigen::Index>(bounds.size()));
    a.hyper_ = hyper_params_from_json(doc.at("hyper"));
    a.step_count_ = doc.at("step").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed agent checkpoint: ") + e.what());
  }
  a.hyper_.validate();
  a.actor_ = mlp_from_json(doc.at("actor"));
  a.critic_ = mlp_from_json(doc.at("critic"));
  a.target_actor_ = mlp_from_json(doc.at("target_actor"));
  a.target_critic_ = mlp_from_json(doc.at("target_critic"));
  require_same_shape(a.actor_, a.target_actor_, "target actor");
  require_same_shape(a.critic_, a.target_critic_, "target critic");
  if (a.actor_.in_dim() != a.observation_dim_ || a.actor_.out_dim() != a.action_dim() ||
      a.critic_.in_dim() != a.observation_dim_ + a.action_dim() || a.critic_.out_dim() != 1) {
    throw ConfigError("checkpoint networks do not match declared dimensions");
  }
  a.actor_adam_ = AdamState::for_params(a.actor_);
  a.critic_adam_ = AdamState::for_params(a.critic_);
  return a;
}

}  // namespace owqe
