#include "lpf/nn_core.hpp"

#include <cmath>
#include <string>

namespace lpf {

namespace {

Matrix activate(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::kIdentity:
      return z;
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kTanh:
      return z.array().tanh().matrix();
    case Activation::kSoftmax:
      return softmax_columns(z);
  }
  return z;
}

// Maps dL/d(post) to dL/d(pre) for one activation.
Matrix activation_backward(Activation act, const Matrix& pre, const Matrix& post,
                           const Matrix& grad) {
  switch (act) {
    case Activation::kIdentity:
      return grad;
    case Activation::kRelu:
      return (pre.array() > 0.0).select(grad, 0.0);
    case Activation::kTanh:
      return (grad.array() * (1.0 - post.array().square())).matrix();
    case Activation::kSoftmax: {
      const Eigen::RowVectorXd dot = (post.array() * grad.array()).colwise().sum();
      return (post.array() * (grad.rowwise() - dot).array()).matrix();
    }
  }
  return grad;
}

std::string layer_name(std::string_view net, std::size_t i, const char* what) {
  return std::string(net) + ".layer" + std::to_string(i) + "." + what;
}

template <typename MaskFn>
ForwardResult run_forward(const Network& net, const Matrix& input, MaskFn&& mask_for) {
  net.validate();
  if (input.cols() < 1) throw ShapeError("forward: empty batch");
  if (input.rows() != net.in_size()) {
    throw ShapeError("forward: layer 0 expects " + std::to_string(net.in_size()) +
                     " input rows, got " + std::to_string(input.rows()));
  }
  ForwardResult result;
  auto& tr = result.trace;
  const std::size_t depth = net.depth();
  tr.inputs.reserve(depth);
  tr.pre_activations.reserve(depth);
  tr.post_activations.reserve(depth);
  tr.dropout_masks.reserve(depth);

  Matrix current = input;
  for (std::size_t i = 0; i < depth; ++i) {
    const DenseLayer& layer = net.layers[i];
    tr.inputs.push_back(current);
    Matrix z = layer.weights * current;
    z.colwise() += layer.bias;
    Matrix a = activate(net.activations[i], z);
    tr.pre_activations.push_back(std::move(z));
    Matrix mask;
    if (i + 1 < depth) mask = mask_for(i, a);
    current = mask.size() > 0 ? Matrix(a.cwiseProduct(mask)) : a;
    tr.post_activations.push_back(std::move(a));
    tr.dropout_masks.push_back(std::move(mask));
  }
  result.output = std::move(current);
  return result;
}

}  // namespace

void Network::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (activations.size() != layers.size()) {
    throw ShapeError("network has " + std::to_string(layers.size()) + " layers but " +
                     std::to_string(activations.size()) + " activations");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_size()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias size " +
                       std::to_string(l.bias.size()) + " != out size " +
                       std::to_string(l.out_size()));
    }
    if (i > 0 && l.in_size() != layers[i - 1].out_size()) {
      throw ShapeError("layer " + std::to_string(i) + ": in size " +
                       std::to_string(l.in_size()) + " != previous out size " +
                       std::to_string(layers[i - 1].out_size()));
    }
  }
}

DenseLayer init_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  DenseLayer layer(in, out);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  // Column-major fill order keeps the draw sequence independent of Eigen.
  for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      layer.weights(r, c) = dist(rng);
    }
  }
  return layer;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp().matrix();
  const Eigen::RowVectorXd sums = out.colwise().sum();
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) /= sums(j);
  return out;
}

ForwardResult forward(const Network& net, const Matrix& input, bool train_mode,
                      Rng* rng) {
  const bool dropout = train_mode && net.dropout_rate > 0.0;
  if (dropout && rng == nullptr) {
    throw std::invalid_argument("forward: train-mode dropout needs an rng");
  }
  const double keep = 1.0 - net.dropout_rate;
  return run_forward(net, input, [&](std::size_t, const Matrix& a) -> Matrix {
    if (!dropout) return {};
    std::bernoulli_distribution coin(keep);
    Matrix mask(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        mask(r, c) = coin(*rng) ? 1.0 / keep : 0.0;
      }
    }
    return mask;
  });
}

Matrix replay(const Network& net, const ForwardTrace& trace) {
  if (trace.dropout_masks.size() != net.depth() || trace.inputs.empty()) {
    throw ShapeError("replay: trace depth does not match network depth");
  }
  return run_forward(net, trace.inputs.front(),
                     [&](std::size_t i, const Matrix&) { return trace.dropout_masks[i]; })
      .output;
}

Gradients backward(const Network& net, const ForwardTrace& trace,
                   const Matrix& output_gradient, std::span<const TapGradient> taps) {
  const std::size_t depth = net.depth();
  if (trace.pre_activations.size() != depth) {
    throw ShapeError("backward: trace depth " + std::to_string(trace.pre_activations.size()) +
                     " != network depth " + std::to_string(depth));
  }
  const Matrix& out = trace.post_activations.back();
  if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols()) {
    throw ShapeError("backward: output gradient is " + shape_str(output_gradient) +
                     ", forward output is " + shape_str(out));
  }
  for (const auto& tap : taps) {
    if (tap.layer >= depth ||
        tap.gradient.rows() != trace.post_activations[tap.layer].rows() ||
        tap.gradient.cols() != trace.post_activations[tap.layer].cols()) {
      throw ShapeError("backward: tap gradient at layer " + std::to_string(tap.layer) +
                       " has the wrong shape");
    }
  }

  Gradients grads;
  grads.layers.resize(depth);
  Matrix g = output_gradient;  // w.r.t. post-activation of layer i
  for (std::size_t k = depth; k-- > 0;) {
    for (const auto& tap : taps) {
      if (tap.layer == k) g += tap.gradient;
    }
    const Matrix gz = activation_backward(net.activations[k], trace.pre_activations[k],
                                          trace.post_activations[k], g);
    grads.layers[k].weights = gz * trace.inputs[k].transpose();
    grads.layers[k].bias = gz.rowwise().sum();
    Matrix g_in = net.layers[k].weights.transpose() * gz;
    if (k > 0 && trace.dropout_masks[k - 1].size() > 0) {
      g_in = g_in.cwiseProduct(trace.dropout_masks[k - 1]);
    }
    g = std::move(g_in);
  }
  grads.input = std::move(g);
  return grads;
}

void sgd_step(Matrix& param, const Matrix& grad, double learning_rate,
              std::string_view name) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError(std::string(name) + ": parameter " + shape_str(param) +
                     " vs gradient " + shape_str(grad));
  }
  if (!grad.allFinite()) {
    throw NumericError(std::string(name) + ": non-finite gradient, step rejected");
  }
  param.noalias() -= learning_rate * grad;
}

void sgd_step(Network& net, const Gradients& grads, double learning_rate,
              std::string_view name) {
  if (grads.layers.size() != net.depth()) {
    throw ShapeError(std::string(name) + ": gradient depth mismatch");
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& g = grads.layers[i];
    const auto& l = net.layers[i];
    if (g.weights.rows() != l.weights.rows() || g.weights.cols() != l.weights.cols() ||
        g.bias.size() != l.bias.size()) {
      throw ShapeError(layer_name(name, i, "weights") + ": gradient shape mismatch");
    }
    if (!g.weights.allFinite()) {
      throw NumericError(layer_name(name, i, "weights") + ": non-finite gradient, step rejected");
    }
    if (!g.bias.allFinite()) {
      throw NumericError(layer_name(name, i, "bias") + ": non-finite gradient, step rejected");
    }
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    net.layers[i].weights.noalias() -= learning_rate * grads.layers[i].weights;
    net.layers[i].bias.noalias() -= learning_rate * grads.layers[i].bias;
  }
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
}

}  // namespace lpf
