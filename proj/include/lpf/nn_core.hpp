#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lpf/common.hpp"

namespace lpf {

enum class Activation { kIdentity, kRelu, kTanh, kSoftmax };

/// Fully connected layer: y = W x + b, W is out x in.
struct DenseLayer {
  Matrix weights;
  Vector bias;

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out)
      : weights(Matrix::Zero(out, in)), bias(Vector::Zero(out)) {}

  Eigen::Index in_size() const { return weights.cols(); }
  Eigen::Index out_size() const { return weights.rows(); }
};

/// Uniform Glorot initialization in +-sqrt(6 / (in + out)); bias starts at 0.
DenseLayer init_dense(Eigen::Index in, Eigen::Index out, Rng& rng);

/// A stack of dense layers. Dropout (inverted scaling) sits between
/// consecutive layers and is active only in train mode; nothing follows the
/// final layer.
struct Network {
  std::vector<DenseLayer> layers;
  std::vector<Activation> activations;
  double dropout_rate = 0.0;

  std::size_t depth() const { return layers.size(); }
  Eigen::Index in_size() const { return layers.front().in_size(); }
  Eigen::Index out_size() const { return layers.back().out_size(); }

  // Throws ShapeError naming the first layer whose sizes do not chain.
  void validate() const;
};

struct ForwardTrace {
  std::vector<Matrix> inputs;            // what each layer consumed
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> post_activations;  // before any dropout
  std::vector<Matrix> dropout_masks;     // scaled keep mask, empty if unused
};

struct ForwardResult {
  Matrix output;
  ForwardTrace trace;
};

/// `rng` is only consulted in train mode with a non-zero dropout rate.
ForwardResult forward(const Network& net, const Matrix& input, bool train_mode,
                      Rng* rng);

/// Re-runs the forward pass with the masks recorded in `trace`.
Matrix replay(const Network& net, const ForwardTrace& trace);

struct LayerGradient {
  Matrix weights;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Matrix input;
};

/// Extra loss gradient injected at the (pre-dropout) output of an inner layer.
struct TapGradient {
  std::size_t layer;
  Matrix gradient;
};

Gradients backward(const Network& net, const ForwardTrace& trace,
                   const Matrix& output_gradient,
                   std::span<const TapGradient> taps = {});

Matrix softmax_columns(const Matrix& logits);

/// p <- p - lr * g. Throws NumericError carrying `name` if g is not finite;
/// the parameter is left untouched in that case.
void sgd_step(Matrix& param, const Matrix& grad, double learning_rate,
              std::string_view name);

/// Applies one step to every layer, or to none if any gradient is non-finite.
void sgd_step(Network& net, const Gradients& grads, double learning_rate,
              std::string_view name);

struct SgdConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

}  // namespace lpf
