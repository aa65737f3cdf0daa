#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lpf/common.hpp"
#include "lpf/data.hpp"
#include "lpf/losses.hpp"
#include "lpf/model.hpp"

namespace lpf {

// Ground-truth marker for unlabeled samples whose class is not a training class.
inline constexpr ClassIndex kOutOfClass = -2;

/// Per-class means of the original (input-space) features, one C x d_t
/// matrix per modality. Built from labeled data only and never updated.
struct MeanFeatureBank {
  std::array<Matrix, 2> means;

  int num_classes() const { return static_cast<int>(means[0].rows()); }
};

MeanFeatureBank compute_class_means(const ModalityPair& labeled_features,
                                    std::span<const ClassIndex> labels, int num_classes);

/// Nearest class mean under squared Euclidean distance; ties go to the lowest
/// class index.
ClassIndex mean_feature_predict(const MeanFeatureBank& bank, const Vector& sample,
                                Modality modality);
std::vector<ClassIndex> mean_feature_predict(const MeanFeatureBank& bank,
                                             const Matrix& samples, Modality modality);

double validation_accuracy(const EncoderDecoder& model, const Matrix& inputs,
                           std::span<const ClassIndex> labels);

struct ConstraintDecision {
  Modality active = Modality::kFirst;
  double cf_1 = 0.0;
  double cf_2 = 0.0;
  double tau = 0.9;
};

/// Modality 1's pair of conditions is active when cf_1 >= cf_2.
ConstraintDecision build_constraint_set(double cf_1, double cf_2, double tau = 0.9);

/// Per-unlabeled-sample evidence for the active modality.
struct SampleEvidence {
  ClassIndex encoder_label = 0;
  ClassIndex mean_label = 0;
  double confidence = 0.0;
  bool accepted = false;
};

struct Selection {
  std::vector<std::size_t> indices;  // columns of the unlabeled matrices
  std::vector<ClassIndex> labels;    // the active encoder's prediction
  std::vector<SampleEvidence> evidence;
};

/// Accepts pair j iff, for the active modality t, max softmax >= tau and the
/// encoder's label equals the nearest-class-mean label. The result covers the
/// whole unlabeled set, so it replaces any earlier selection.
Selection select_pseudo_labels(const std::array<EncoderDecoder, 2>& models,
                               const MeanFeatureBank& bank, const ModalityPair& unlabeled,
                               const ConstraintDecision& decision);

/// Same rule from precomputed evaluations of the active modality.
Selection select_from_evidence(std::span<const ClassIndex> encoder_labels,
                               std::span<const double> confidences,
                               std::span<const ClassIndex> mean_labels, double tau);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  double cf_1 = 0.0;
  double cf_2 = 0.0;
  Modality active = Modality::kFirst;
  std::size_t pool_size = 0;
  std::optional<double> pool_accuracy;  // only with ground truth and a non-empty pool
  std::size_t out_of_class = 0;         // selected samples whose true class is unseen
  // Encoder accuracy over the in-class unlabeled samples, per modality.
  std::array<std::optional<double>, 2> unlabeled_accuracy;
  std::array<std::vector<std::optional<double>>, 2> per_class_accuracy;
};

struct PseudoLabelPool {
  std::vector<std::size_t> selected_indices;
  std::vector<ClassIndex> assigned_labels;
  std::vector<IterationRecord> history;
};

struct LpfConfig {
  Eigen::Index hidden = kDefaultHidden;
  double dropout = kDefaultDropout;
  LossWeights weights;
  double learning_rate = 1e-2;
  std::size_t lr_decay_epoch = 100;
  double lr_decay = 0.1;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  std::size_t batch_size = 32;
  double center_lr_multiplier = 5.0;
  double finetune_learning_rate = 1e-4;
  std::size_t finetune_epochs = 20;
  std::size_t max_iterations = 10;
  double tau = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Training inputs with classes remapped to 0..C-1. `unlabeled_truth` is
/// either empty (unknown) or one entry per unlabeled column, kOutOfClass for
/// samples of unseen classes.
struct LpfInput {
  ModalityPair train;
  std::vector<ClassIndex> train_labels;
  ModalityPair validation;
  std::vector<ClassIndex> validation_labels;
  ModalityPair unlabeled;
  std::vector<ClassIndex> unlabeled_truth;
  std::vector<std::size_t> unlabeled_source;  // dataset index of each unlabeled column
  int num_classes = 0;

  void validate() const;
};

/// Gathers the partitions of `splits`, remapping seen classes to 0..C-1.
LpfInput make_lpf_input(const PairedDataset& ds, const Splits& splits);

struct LpfResult {
  std::array<EncoderDecoder, 2> models;
  PseudoLabelPool pool;  // indices are unlabeled columns
  ModalityPair expanded_features;
  std::vector<ClassIndex> expanded_labels;
  std::size_t initial_epochs = 0;
};

/// Initial training of one modality's network with early stopping on
/// validation accuracy. Returns the number of epochs run.
std::size_t train_initial(EncoderDecoder& model, const Matrix& train,
                          std::span<const ClassIndex> train_labels, const Matrix& validation,
                          std::span<const ClassIndex> validation_labels,
                          const Matrix& unlabeled, const LpfConfig& config, Rng& rng);

/// Fixed-length fine-tuning on (expanded set, labels) with the remaining
/// unlabeled samples contributing entropy and reconstruction.
void fine_tune(EncoderDecoder& model, const Matrix& labeled,
               std::span<const ClassIndex> labels, const Matrix& unlabeled,
               const LpfConfig& config, Rng& rng);

LpfResult run_lpf(const LpfInput& input, const LpfConfig& config);
LpfResult run_lpf(const PairedDataset& ds, const Splits& splits, const LpfConfig& config);

}  // namespace lpf
