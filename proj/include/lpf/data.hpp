#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpf/common.hpp"

namespace lpf {

/// Two views of the same N samples: column j of features_1 and features_2 is
/// one pair. Labels are 0-indexed classes.
struct PairedDataset {
  Matrix features_1;  // d_1 x N
  Matrix features_2;  // d_2 x N
  std::vector<ClassIndex> labels;

  std::size_t size() const { return labels.size(); }
  int num_classes() const;
  const Matrix& features(Modality m) const {
    return m == Modality::kFirst ? features_1 : features_2;
  }
  void validate() const;
};

enum class Partition : std::uint8_t { kTrain, kValidation, kUnlabeled, kTest, kUnused };

std::string_view name_of(Partition p);

struct OpenSetSpec {
  std::size_t unseen_class_count = 0;
  // When non-empty, overrides the random draw of unseen classes.
  std::vector<ClassIndex> unseen_classes;
  double kappa = 0.0;
};

struct SplitSpec {
  double rho = 0.1;                  // labeled fraction of the training data
  double validation_fraction = 0.2;  // of the labeled portion
  double test_fraction = 0.0;        // carved off before rho is applied
  std::uint64_t seed = 0;
  std::optional<OpenSetSpec> open_set;

  void validate() const;
};

struct Splits {
  std::vector<Partition> assignment;  // one entry per sample
  std::vector<ClassIndex> seen_classes;
  std::vector<ClassIndex> unseen_classes;
  double requested_kappa = 0.0;
  double effective_kappa = 0.0;
  std::vector<std::string> warnings;

  std::vector<std::size_t> indices(Partition p) const;
  std::size_t count(Partition p) const;
};

class DataError : public std::runtime_error {
 public:
  enum class Kind { kMissingFile, kNonNumeric, kCountMismatch, kInvalidSplit };

  DataError(Kind kind, std::string message, std::size_t line = 0)
      : std::runtime_error(std::move(message)), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }  // 1-based, 0 when not applicable

 private:
  Kind kind_;
  std::size_t line_;
};

/// Delimited text: one row per feature dimension, one column per sample.
/// Commas, tabs and spaces all separate cells; '#' starts a comment.
Matrix load_matrix(const std::filesystem::path& path);
void save_matrix(const Matrix& m, const std::filesystem::path& path);

/// One integer label per line. Distinct values are remapped, in sorted order,
/// to 0..K-1.
std::vector<ClassIndex> load_labels(const std::filesystem::path& path);
void save_labels(const std::vector<ClassIndex>& labels, const std::filesystem::path& path);

PairedDataset load_dataset(const std::filesystem::path& features_1,
                           const std::filesystem::path& features_2,
                           const std::filesystem::path& labels);
void save_dataset(const PairedDataset& ds, const std::filesystem::path& features_1,
                  const std::filesystem::path& features_2,
                  const std::filesystem::path& labels);

struct NormalizationStats {
  Vector mean_1, std_1;
  Vector mean_2, std_2;
};

inline constexpr double kStdFloor = 1e-8;

struct NormalizedDataset {
  PairedDataset dataset;
  NormalizationStats stats;
};

/// Per-dimension z-score using statistics of the labeled-train partition only.
NormalizedDataset zscore_normalize(const PairedDataset& ds, const Splits& splits);

/// Class-stratified test / labeled (train + validation) / unlabeled split.
Splits make_splits(const PairedDataset& ds, const SplitSpec& spec);

/// Labeled and test partitions restricted to seen classes; the unlabeled
/// partition mixes in-class and unseen-class samples at 1:kappa.
Splits make_open_set_splits(const PairedDataset& ds, const SplitSpec& spec);

/// "index<TAB>partition" rows.
void save_splits(const Splits& splits, const std::filesystem::path& path);

struct SynthSpec {
  int classes = 8;
  Eigen::Index dim_1 = 16;
  Eigen::Index dim_2 = 24;
  std::size_t per_class = 200;
  double separation_1 = 1.0;  // std-dev of the class anchors, modality 1
  double separation_2 = 1.0;
  double noise = 1.0;         // std-dev of the per-sample noise
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian clusters around one random anchor per (class, modality). The two
/// views of a pair share the class but draw independent noise.
PairedDataset synth_generate(const SynthSpec& spec);

}  // namespace lpf
