#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lpf/common.hpp"
#include "lpf/losses.hpp"
#include "lpf/nn_core.hpp"

namespace lpf {

inline constexpr Eigen::Index kDefaultHidden = 250;
inline constexpr double kDefaultDropout = 0.3;

/// Encoder d -> h -> h -> C whose final pre-activation feeds both a softmax
/// (label head) and a tanh (code passed to the decoder), plus the mirrored
/// decoder C -> h -> h -> d and one learned center per class in the h-dim
/// feature space tapped after the second encoder layer.
struct EncoderDecoder {
  Network encoder;
  Network decoder;
  Matrix centers;  // C x h

  Eigen::Index input_dim() const { return encoder.in_size(); }
  Eigen::Index feature_dim() const { return encoder.layers[1].out_size(); }
  int num_classes() const { return static_cast<int>(encoder.out_size()); }

  void validate() const;
};

// Index of the encoder layer whose output is x_f.
inline constexpr std::size_t kFeatureTapLayer = 1;

struct EncodeOutput {
  Matrix x_f;
  Matrix logits;
  Matrix x_softmax;
  Matrix x_tanh;
  ForwardTrace trace;
};

struct Prediction {
  std::vector<ClassIndex> labels;
  std::vector<double> confidences;
};

EncoderDecoder init_model(Eigen::Index input_dim, int num_classes, std::uint64_t seed,
                          Eigen::Index hidden = kDefaultHidden,
                          double dropout = kDefaultDropout);

EncodeOutput encode(const EncoderDecoder& model, const Matrix& inputs, bool train_mode,
                    Rng* rng = nullptr);

Matrix decode(const EncoderDecoder& model, const Matrix& x_tanh, bool train_mode,
              Rng* rng = nullptr);

/// Column-wise argmax; ties go to the lowest class index.
Prediction argmax_columns(const Matrix& probs);

/// Eval-mode label prediction from the softmax head.
Prediction predict_label(const EncoderDecoder& model, const Matrix& inputs);

/// Sets every center to the mean eval-mode x_f of its class. Classes without
/// samples keep a zero center.
void init_centers(EncoderDecoder& model, const Matrix& inputs,
                  std::span<const ClassIndex> labels);

/// Loss and parameter gradients of one modality's network on a batch.
/// Columns labelled kUnlabeled contribute entropy; labelled columns contribute
/// cross-entropy and center loss; every column contributes reconstruction.
/// Gradients already carry the loss weights. Centers are not differentiated;
/// `center_delta` holds their averaged update instead.
struct ObjectiveResult {
  LossTerms terms;
  double total = 0.0;
  Gradients encoder;
  Gradients decoder;
  Matrix center_delta;
};

ObjectiveResult evaluate_objective(const EncoderDecoder& model, const Matrix& inputs,
                                   std::span<const ClassIndex> labels,
                                   const LossWeights& weights, bool train_mode,
                                   Rng* rng = nullptr);

void apply_update(EncoderDecoder& model, const ObjectiveResult& result,
                  double learning_rate, double center_learning_rate);

/// Text checkpoint; values are written with 17 significant digits so a
/// save/load round trip is bit-exact.
void save_checkpoint(const EncoderDecoder& model, std::ostream& out);
EncoderDecoder load_checkpoint(std::istream& in);

}  // namespace lpf
