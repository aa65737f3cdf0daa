#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lpf/common.hpp"

namespace lpf {

/// Average precision of one ranked list given relevance flags for its top R
/// items: sum_r P(r) rel(r) / sum_r rel(r). Zero when nothing relevant is
/// retrieved.
double average_precision(std::span<const int> relevant);

struct RetrievalRun {
  Modality query = Modality::kFirst;
  Modality database = Modality::kSecond;
  std::vector<std::vector<std::size_t>> ranked;  // per query, database indices
  std::vector<ClassIndex> query_labels;
  std::vector<ClassIndex> database_labels;
};

/// Mean AP over queries on the top R of each list. An item is relevant when
/// it shares the query's label. Throws std::invalid_argument if any list is
/// shorter than R.
double map_at_r(const RetrievalRun& run, std::size_t r);

struct Ranking {
  std::vector<std::vector<std::size_t>> lists;
  std::size_t zero_norm_count = 0;  // zero-norm queries plus database items
};

/// Full ranking of the database columns for each query column by descending
/// cosine similarity; ties by ascending database index. Zero-norm vectors
/// score -infinity.
Ranking rank_by_similarity(const Matrix& queries, const Matrix& database);

/// Ridge regression from features (plus a bias input) to one-hot labels.
/// Cross-modal retrieval compares the projected vectors in label space.
struct LinearLabelRetriever {
  ModalityPair maps;  // C x (d_t + 1), last column is the bias
  double ridge = 1e-3;

  Matrix embed(Modality m, const Matrix& features) const;
};

inline constexpr double kDefaultRidge = 1e-3;

LinearLabelRetriever fit_linear_label_retriever(const ModalityPair& features,
                                                std::span<const ClassIndex> labels,
                                                int num_classes,
                                                double ridge = kDefaultRidge);

/// Accuracy per true class; std::nullopt for classes with no samples.
std::vector<std::optional<double>> per_class_accuracy(std::span<const ClassIndex> predicted,
                                                      std::span<const ClassIndex> truth,
                                                      int num_classes);

enum class Mode { kFull, kLabeled, kSemiSupervised };

std::string_view name_of(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

struct MapReport {
  Mode mode = Mode::kLabeled;
  std::size_t r = 50;
  double map_i2t = 0.0;  // modality 1 queries, modality 2 database
  double map_t2i = 0.0;
  std::size_t zero_norm_count = 0;
};

/// Both retrieval directions over a test set; each direction's database is the
/// whole test set of the other modality, query counterparts included.
MapReport evaluate_retrieval(const LinearLabelRetriever& retriever, const ModalityPair& test,
                             std::span<const ClassIndex> labels, std::size_t r, Mode mode);

}  // namespace lpf
