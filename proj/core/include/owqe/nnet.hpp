#pragma once

// Small dense MLP engine: forward pass, reverse-mode gradients and Adam.
//
// Column convention: a batch of B inputs is a (din x B) matrix, one sample per
// column. Every gradient routine returns the gradient of <upstream, output>
// summed over the batch columns.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "owqe/rng.hpp"

namespace owqe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { Relu, Softmax, Tanh, Linear };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Linear;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t parameter_count() const;

  /// Throws ConfigError on incompatible consecutive dimensions or non-finite
  /// coefficients.
  void validate() const;
};

/// Builds a fully connected network with layer widths `sizes` (input first).
/// Coefficients are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output, Rng& rng);

/// Gradient container shaped like MlpParams.
struct ParamGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static ParamGrads zeros_like(const MlpParams& params);
  void set_zero();
  bool all_finite() const;
};

/// Activations recorded by forward_batch for a later backward_batch call.
/// `values[0]` is the input, `values[k + 1]` is the output of layer k.
struct Tape {
  std::vector<Matrix> values;
};

Vector forward(const MlpParams& params, const Vector& input);

/// Batched forward pass. When `tape` is non-null it receives every
/// intermediate activation.
Matrix forward_batch(const MlpParams& params, const Matrix& inputs, Tape* tape = nullptr);

struct Backward {
  ParamGrads params;
  Vector input;
};

Backward backward(const MlpParams& params, const Vector& input, const Vector& upstream);

/// Backpropagates `upstream` (dout x B) through the recorded tape. Parameter
/// gradients are written to `grads` (overwritten, summed over the batch) unless
/// it is null. Returns the input gradient (din x B).
Matrix backward_batch(const MlpParams& params, const Tape& tape, const Matrix& upstream,
                      ParamGrads* grads);

struct AdamState {
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const MlpParams& params);
};

/// One bias-corrected Adam step of descent along `grads`. A non-finite gradient
/// throws NumericError and leaves both params and state untouched.
void adam_step(MlpParams& params, const ParamGrads& grads, AdamState& state, double lr);

/// Adam update for a single flat parameter block; the building block of
/// adam_step, also used for the ensemble weight vector.
void adam_update(Eigen::Ref<Eigen::ArrayXd> param, const Eigen::Ref<const Eigen::ArrayXd>& grad,
                 Eigen::Ref<Eigen::ArrayXd> m, Eigen::Ref<Eigen::ArrayXd> v, long step, double lr,
                 double beta1, double beta2, double eps);

/// Numerically stable softmax (max-subtracted). Throws ConfigError when empty.
Vector softmax(const Eigen::Ref<const Vector>& v);

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& doc);

}  // namespace owqe
