#pragma once

#include <span>

#include "lpf/common.hpp"

namespace lpf {

struct LossWeights {
  double alpha_ce = 1.0;
  double alpha_c = 0.5;
  double alpha_ent = 1.0;
  double alpha_r = 0.01;

  void validate() const;
};

struct LossTerms {
  double ce = 0.0;
  double center = 0.0;
  double entropy = 0.0;
  double reconstruction = 0.0;
};

/// Value plus gradient. For ce and entropy the gradient is taken with respect
/// to the pre-softmax logits; for reconstruction, with respect to x_hat.
struct LossResult {
  double value = 0.0;
  Matrix gradient;
};

struct CenterLossResult {
  double value = 0.0;
  Matrix feature_gradient;  // f_dim x b
  Matrix center_delta;      // C x f_dim; apply as c_k -= lr' * delta_k
};

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_j log p_j[label_j]. Throws NumericError naming the offending sample
/// when a label is outside [0, C).
LossResult cross_entropy(const Matrix& probs, std::span<const ClassIndex> labels);

/// sum_j ||x_j - c_{label_j}||^2, with the averaged center update
/// delta_k = sum_{j in k}(c_k - x_j) / (1 + n_k).
CenterLossResult center_loss(const Matrix& features, std::span<const ClassIndex> labels,
                             const Matrix& centers);

/// Shannon entropy summed over columns.
LossResult entropy_regularization(const Matrix& probs);

LossResult reconstruction(const Matrix& inputs, const Matrix& reconstructions);

double total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace lpf
