#include "lpf/eval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lpf {

double average_precision(std::span<const int> relevant) {
  // Extended precision so short hand-checkable lists round to the exact value.
  long double hits = 0.0L;
  long double sum = 0.0L;
  for (std::size_t r = 0; r < relevant.size(); ++r) {
    if (relevant[r] != 0) {
      hits += 1.0L;
      sum += hits / static_cast<long double>(r + 1);
    }
  }
  return hits > 0.0L ? static_cast<double>(sum / hits) : 0.0;
}

double map_at_r(const RetrievalRun& run, std::size_t r) {
  if (r < 1) throw std::invalid_argument("map_at_r: R must be >= 1");
  if (run.ranked.size() != run.query_labels.size()) {
    throw ShapeError("map_at_r: one ranked list per query required");
  }
  if (run.ranked.empty()) throw std::invalid_argument("map_at_r: no queries");
  double total = 0.0;
  std::vector<int> flags(r);
  for (std::size_t q = 0; q < run.ranked.size(); ++q) {
    const auto& list = run.ranked[q];
    if (list.size() < r) {
      throw std::invalid_argument("map_at_r: query " + std::to_string(q) + " has " +
                                  std::to_string(list.size()) + " results, need " +
                                  std::to_string(r));
    }
    for (std::size_t i = 0; i < r; ++i) {
      flags[i] = run.database_labels.at(list[i]) == run.query_labels[q] ? 1 : 0;
    }
    total += average_precision(flags);
  }
  return total / static_cast<double>(run.ranked.size());
}

Ranking rank_by_similarity(const Matrix& queries, const Matrix& database) {
  if (queries.rows() != database.rows()) {
    throw ShapeError("rank_by_similarity: query dim " + std::to_string(queries.rows()) +
                     " != database dim " + std::to_string(database.rows()));
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const Vector q_norm = queries.colwise().norm().transpose();
  const Vector d_norm = database.colwise().norm().transpose();
  Ranking ranking;
  ranking.zero_norm_count = static_cast<std::size_t>((q_norm.array() == 0.0).count() +
                                                     (d_norm.array() == 0.0).count());
  const Matrix dots = queries.transpose() * database;  // nq x nd

  const auto nd = static_cast<std::size_t>(database.cols());
  std::vector<double> sim(nd);
  ranking.lists.resize(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index q = 0; q < queries.cols(); ++q) {
    for (std::size_t i = 0; i < nd; ++i) {
      const auto d = static_cast<Eigen::Index>(i);
      sim[i] = (q_norm(q) == 0.0 || d_norm(d) == 0.0) ? kNegInf
                                                      : dots(q, d) / (q_norm(q) * d_norm(d));
    }
    auto& list = ranking.lists[static_cast<std::size_t>(q)];
    list.resize(nd);
    std::iota(list.begin(), list.end(), std::size_t{0});
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return sim[a] != sim[b] ? sim[a] > sim[b] : a < b;
    });
  }
  return ranking;
}

namespace {

Matrix with_bias_row(const Matrix& x) {
  Matrix out(x.rows() + 1, x.cols());
  out.topRows(x.rows()) = x;
  out.bottomRows(1).setOnes();
  return out;
}

}  // namespace

Matrix LinearLabelRetriever::embed(Modality m, const Matrix& features) const {
  const Matrix& w = maps[static_cast<std::size_t>(index_of(m))];
  if (features.rows() + 1 != w.cols()) {
    throw ShapeError("retriever: feature dim " + std::to_string(features.rows()) +
                     " does not match the fitted map");
  }
  return w * with_bias_row(features);
}

LinearLabelRetriever fit_linear_label_retriever(const ModalityPair& features,
                                                std::span<const ClassIndex> labels,
                                                int num_classes, double ridge) {
  if (!(ridge > 0.0)) throw std::invalid_argument("ridge must be > 0");
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix targets = Matrix::Zero(num_classes, n);
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto k = labels[static_cast<std::size_t>(j)];
    if (k < 0 || k >= num_classes) {
      throw NumericError("retriever: sample " + std::to_string(j) + " has label " +
                         std::to_string(k) + " out of range");
    }
    targets(k, j) = 1.0;
    ++counts[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw std::invalid_argument("retriever: class " + std::to_string(k) + " has no samples");
    }
  }
  LinearLabelRetriever retriever;
  retriever.ridge = ridge;
  for (std::size_t t = 0; t < 2; ++t) {
    if (features[t].cols() != n) throw ShapeError("retriever: feature/label count mismatch");
    const Matrix xa = with_bias_row(features[t]);
    Matrix gram = xa * xa.transpose();
    gram.diagonal().array() += ridge;
    // W^T = (Xa Xa^T + ridge I)^-1 Xa Y^T; gram is SPD thanks to the ridge.
    retriever.maps[t] = gram.ldlt().solve(xa * targets.transpose()).transpose();
  }
  return retriever;
}

std::vector<std::optional<double>> per_class_accuracy(std::span<const ClassIndex> predicted,
                                                      std::span<const ClassIndex> truth,
                                                      int num_classes) {
  if (predicted.size() != truth.size()) throw ShapeError("per_class_accuracy: size mismatch");
  std::vector<std::size_t> hits(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::size_t> totals(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (truth[j] < 0 || truth[j] >= num_classes) {
      throw NumericError("per_class_accuracy: label out of range at sample " + std::to_string(j));
    }
    const auto k = static_cast<std::size_t>(truth[j]);
    ++totals[k];
    hits[k] += predicted[j] == truth[j] ? 1 : 0;
  }
  std::vector<std::optional<double>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (totals[k] > 0) out[k] = static_cast<double>(hits[k]) / static_cast<double>(totals[k]);
  }
  return out;
}

std::string_view name_of(Mode m) {
  switch (m) {
    case Mode::kFull: return "f";
    case Mode::kLabeled: return "l";
    case Mode::kSemiSupervised: return "ss";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "f") return Mode::kFull;
  if (s == "l") return Mode::kLabeled;
  if (s == "ss") return Mode::kSemiSupervised;
  return std::nullopt;
}

MapReport evaluate_retrieval(const LinearLabelRetriever& retriever, const ModalityPair& test,
                             std::span<const ClassIndex> labels, std::size_t r, Mode mode) {
  const Matrix e1 = retriever.embed(Modality::kFirst, test[0]);
  const Matrix e2 = retriever.embed(Modality::kSecond, test[1]);
  const std::vector<ClassIndex> y(labels.begin(), labels.end());

  MapReport report;
  report.mode = mode;
  report.r = r;
  auto direction = [&](const Matrix& q, const Matrix& db, Modality qm, Modality dm) {
    auto ranking = rank_by_similarity(q, db);
    report.zero_norm_count += ranking.zero_norm_count;
    RetrievalRun run{qm, dm, std::move(ranking.lists), y, y};
    return map_at_r(run, r);
  };
  report.map_i2t = direction(e1, e2, Modality::kFirst, Modality::kSecond);
  report.map_t2i = direction(e2, e1, Modality::kSecond, Modality::kFirst);
  return report;
}

}  // namespace lpf
