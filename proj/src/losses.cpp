#include "lpf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lpf {

namespace {

void check_labels(std::span<const ClassIndex> labels, Eigen::Index num_classes,
                  Eigen::Index batch, const char* who) {
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(batch));
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || labels[j] >= num_classes) {
      throw NumericError(std::string(who) + ": sample " + std::to_string(j) + " has label " +
                         std::to_string(labels[j]) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (alpha_ce < 0 || alpha_c < 0 || alpha_ent < 0 || alpha_r < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

LossResult cross_entropy(const Matrix& probs, std::span<const ClassIndex> labels) {
  check_labels(labels, probs.rows(), probs.cols(), "cross_entropy");
  LossResult r;
  r.gradient = probs;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    const auto k = labels[static_cast<std::size_t>(j)];
    r.value -= std::log(std::max(probs(k, j), kProbabilityFloor));
    r.gradient(k, j) -= 1.0;
  }
  return r;
}

CenterLossResult center_loss(const Matrix& features, std::span<const ClassIndex> labels,
                             const Matrix& centers) {
  if (centers.cols() != features.rows()) {
    throw ShapeError("center_loss: centers are " + shape_str(centers) + ", features are " +
                     shape_str(features));
  }
  check_labels(labels, centers.rows(), features.cols(), "center_loss");
  CenterLossResult r;
  r.feature_gradient = Matrix::Zero(features.rows(), features.cols());
  r.center_delta = Matrix::Zero(centers.rows(), centers.cols());
  std::vector<int> counts(static_cast<std::size_t>(centers.rows()), 0);
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const auto k = labels[static_cast<std::size_t>(j)];
    const Vector diff = features.col(j) - centers.row(k).transpose();
    r.value += diff.squaredNorm();
    r.feature_gradient.col(j) = 2.0 * diff;
    r.center_delta.row(k) -= diff.transpose();
    ++counts[static_cast<std::size_t>(k)];
  }
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    r.center_delta.row(k) /= 1.0 + counts[static_cast<std::size_t>(k)];
  }
  return r;
}

LossResult entropy_regularization(const Matrix& probs) {
  const Matrix logp = probs.cwiseMax(kProbabilityFloor).array().log().matrix();
  const Eigen::RowVectorXd col_entropy = -(probs.array() * logp.array()).colwise().sum();
  LossResult r;
  r.value = col_entropy.sum();
  // dH/dz_i = -p_i (log p_i + H)
  r.gradient = -(probs.array() * (logp.rowwise() + col_entropy).array()).matrix();
  return r;
}

LossResult reconstruction(const Matrix& inputs, const Matrix& reconstructions) {
  if (inputs.rows() != reconstructions.rows() || inputs.cols() != reconstructions.cols()) {
    throw ShapeError("reconstruction: inputs " + shape_str(inputs) + " vs reconstructions " +
                     shape_str(reconstructions));
  }
  LossResult r;
  const Matrix diff = reconstructions - inputs;
  r.value = diff.squaredNorm();
  r.gradient = 2.0 * diff;
  return r;
}

double total_loss(const LossTerms& t, const LossWeights& w) {
  return w.alpha_ce * t.ce + w.alpha_c * t.center + w.alpha_ent * t.entropy +
         w.alpha_r * t.reconstruction;
}

}  // namespace lpf
