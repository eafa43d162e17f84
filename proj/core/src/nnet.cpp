#include "owqe/nnet.hpp"

#include <cmath>
#include <random>

#include "owqe/error.hpp"

namespace owqe {

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      return;
    case Activation::Softmax:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() = (col.array() - col.maxCoeff()).exp();
        col /= col.sum();
      }
      return;
  }
}

// Turns dL/dy into dL/dz in place, where y = act(z) is the recorded output.
void activation_backward(Activation act, const Matrix& y, Matrix& g) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::Relu:
      g = (y.array() > 0.0).select(g, 0.0);
      return;
    case Activation::Tanh:
      g.array() *= 1.0 - y.array().square();
      return;
    case Activation::Softmax: {
      const Eigen::RowVectorXd dots = (y.array() * g.array()).colwise().sum();
      g = (y.array() * (g.array().rowwise() - dots.array())).matrix();
      return;
    }
  }
}

void check_input(const MlpParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw ConfigError("network has no layers");
  if (rows != params.in_dim()) {
    throw ConfigError("input dimension " + std::to_string(rows) + " does not match network input " +
                      std::to_string(params.in_dim()));
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Eigen::Index MlpParams::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
Eigen::Index MlpParams::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.size() != l.out_dim()) {
      throw ConfigError("layer " + std::to_string(k) + ": bias length does not match output");
    }
    if (k > 0 && l.in_dim() != layers[k - 1].out_dim()) {
      throw ConfigError("layer " + std::to_string(k) + ": input " + std::to_string(l.in_dim()) +
                        " does not match previous output " +
                        std::to_string(layers[k - 1].out_dim()));
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw ConfigError("layer " + std::to_string(k) + ": non-finite coefficient");
    }
  }
}

MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  MlpParams p;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int in = sizes[k];
    const int out = sizes[k + 1];
    if (in <= 0 || out <= 0) throw ConfigError("layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l;
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = dist(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = dist(rng);
    l.activation = (k + 2 == sizes.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
  }
  return p;
}

ParamGrads ParamGrads::zeros_like(const MlpParams& params) {
  ParamGrads g;
  for (const auto& l : params.layers) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

void ParamGrads::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

bool ParamGrads::all_finite() const {
  for (const auto& w : weight)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

Vector forward(const MlpParams& params, const Vector& input) {
  check_input(params, input.size());
  Matrix x = input;
  for (const auto& l : params.layers) {
    Matrix z = l.weight * x;
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    x = std::move(z);
  }
  return x.col(0);
}

Matrix forward_batch(const MlpParams& params, const Matrix& inputs, Tape* tape) {
  check_input(params, inputs.rows());
  if (tape) {
    tape->values.resize(params.layers.size() + 1);
    tape->values[0] = inputs;
  }
  Matrix x = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& l = params.layers[k];
    Matrix z(l.out_dim(), x.cols());
    z.noalias() = l.weight * x;
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    if (tape) tape->values[k + 1] = z;
    x = std::move(z);
  }
  return x;
}

Matrix backward_batch(const MlpParams& params, const Tape& tape, const Matrix& upstream,
                      ParamGrads* grads) {
  const std::size_t n = params.layers.size();
  if (tape.values.size() != n + 1) throw ConfigError("tape does not match network depth");
  if (upstream.rows() != params.out_dim() || upstream.cols() != tape.values[0].cols()) {
    throw ConfigError("upstream gradient shape does not match network output");
  }
  if (grads && grads->weight.size() != n) *grads = ParamGrads::zeros_like(params);

  Matrix g = upstream;
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = params.layers[k];
    activation_backward(l.activation, tape.values[k + 1], g);
    if (grads) {
      grads->weight[k].noalias() = g * tape.values[k].transpose();
      grads->bias[k] = g.rowwise().sum();
    }
    Matrix prev(l.in_dim(), g.cols());
    prev.noalias() = l.weight.transpose() * g;
    g = std::move(prev);
  }
  return g;
}

Backward backward(const MlpParams& params, const Vector& input, const Vector& upstream) {
  check_input(params, input.size());
  if (upstream.size() != params.out_dim()) {
    throw ConfigError("upstream length does not match network output");
  }
  Tape tape;
  forward_batch(params, input, &tape);
  Backward out;
  out.params = ParamGrads::zeros_like(params);
  out.input = backward_batch(params, tape, upstream, &out.params).col(0);
  return out;
}

AdamState AdamState::for_params(const MlpParams& params) {
  AdamState s;
  for (const auto& l : params.layers) {
    s.m_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    s.v_weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    s.m_bias.push_back(Vector::Zero(l.bias.size()));
    s.v_bias.push_back(Vector::Zero(l.bias.size()));
  }
  return s;
}

void adam_update(Eigen::Ref<Eigen::ArrayXd> param, const Eigen::Ref<const Eigen::ArrayXd>& grad,
                 Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v, long step, double lr,
                 double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.square();
  param -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
}

void adam_step(MlpParams& params, const ParamGrads& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (grads.weight.size() != params.layers.size() || state.m_weight.size() != params.layers.size()) {
    throw ConfigError("gradient/optimizer state does not match network");
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& l = params.layers[k];
    if (grads.weight[k].rows() != l.weight.rows() || grads.weight[k].cols() != l.weight.cols() ||
        grads.bias[k].size() != l.bias.size() || state.m_weight[k].size() != l.weight.size() ||
        state.m_bias[k].size() != l.bias.size()) {
      throw ConfigError("gradient shape mismatch at layer " + std::to_string(k));
    }
  }
  if (!grads.all_finite()) throw NumericError("non-finite gradient; Adam step rejected");

  const long step = state.step + 1;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& l = params.layers[k];
    const auto size = l.weight.size();
    adam_update(Eigen::Map<Eigen::ArrayXd>(l.weight.data(), size),
                Eigen::Map<const Eigen::ArrayXd>(grads.weight[k].data(), size),
                Eigen::Map<Eigen::ArrayXd>(state.m_weight[k].data(), size),
                Eigen::Map<Eigen::ArrayXd>(state.v_weight[k].data(), size), step, lr, state.beta1,
                state.beta2, state.eps);
    adam_update(l.bias.array(), grads.bias[k].array(), state.m_bias[k].array(),
                state.v_bias[k].array(), step, lr, state.beta1, state.beta2, state.eps);
  }
  state.step = step;
}

Vector softmax(const Eigen::Ref<const Vector>& v) {
  if (v.size() == 0) throw ConfigError("softmax of an empty vector");
  Vector e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

nlohmann::json to_json(const MlpParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) w.push_back(l.weight(i, j));
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", to_string(l.activation)},
                      {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"layers", layers}};
}

MlpParams mlp_from_json(const nlohmann::json& doc) {
  MlpParams p;
  try {
    for (const auto& jl : doc.at("layers")) {
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weight").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
        throw ConfigError("layer coefficient count does not match declared dimensions");
      }
      Layer l;
      l.weight.resize(out, in);
      for (Eigen::Index i = 0; i < out; ++i)
        for (Eigen::Index j = 0; j < in; ++j) l.weight(i, j) = w[static_cast<std::size_t>(i * in + j)];
      l.bias = Eigen::Map<const Vector>(b.data(), out);
      l.activation = activation_from_string(jl.at("activation").get<std::string>());
      p.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network document: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace owqe
