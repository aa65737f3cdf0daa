#include <doctest.h>

#include <set>
#include <vector>

#include "lpf/data.hpp"
#include "lpf/label_prediction.hpp"

using namespace lpf;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

LpfConfig tiny_config() {
  LpfConfig c;
  c.hidden = 16;
  c.epochs = 15;
  c.patience = 5;
  c.finetune_epochs = 3;
  c.max_iterations = 4;
  c.seed = 3;
  return c;
}

PairedDataset small_synth() {
  SynthSpec s;
  s.classes = 3;
  s.dim_1 = 4;
  s.dim_2 = 5;
  s.per_class = 40;
  s.separation_1 = 2.0;
  s.separation_2 = 2.0;
  s.seed = 5;
  return synth_generate(s);
}

SplitSpec small_split() {
  SplitSpec sp;
  sp.rho = 0.25;
  sp.seed = 8;
  return sp;
}

}  // namespace

TEST_CASE("class means match brute-force per-class averaging") {
  ModalityPair x{gaussian(2, 9, 1), gaussian(3, 9, 2)};
  const std::vector<ClassIndex> y = {0, 1, 2, 2, 1, 0, 0, 2, 1};
  const auto bank = compute_class_means(x, y, 3);
  for (std::size_t t = 0; t < 2; ++t) {
    for (int k = 0; k < 3; ++k) {
      Vector sum = Vector::Zero(x[t].rows());
      int n = 0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] == k) {
          sum += x[t].col(static_cast<Eigen::Index>(j));
          ++n;
        }
      }
      CHECK(bank.means[t].row(k).transpose().isApprox(sum / n));
    }
  }
  const std::vector<ClassIndex> missing = {0, 0, 1, 1, 0, 0, 1, 1, 0};
  CHECK_THROWS(compute_class_means(x, missing, 3));
}

TEST_CASE("nearest class mean matches an exhaustive distance scan") {
  MeanFeatureBank bank;
  bank.means = {gaussian(8, 6, 3), gaussian(8, 4, 4)};
  const Matrix samples = gaussian(6, 20, 5);
  const auto pred = mean_feature_predict(bank, samples, Modality::kFirst);
  for (Eigen::Index j = 0; j < 20; ++j) {
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 8; ++k) {
      const double d = (samples.col(j) - bank.means[0].row(k).transpose()).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    CHECK(pred[static_cast<std::size_t>(j)] == best);
  }
  CHECK_THROWS_AS(mean_feature_predict(bank, samples, Modality::kSecond), ShapeError);
}

TEST_CASE("equidistant means resolve to the lower class") {
  MeanFeatureBank bank;
  bank.means[0] = Matrix(2, 1);
  bank.means[0] << -1.0, 1.0;
  bank.means[1] = Matrix::Zero(2, 1);
  CHECK(mean_feature_predict(bank, Vector(Vector::Zero(1)), Modality::kFirst) == 0);
}

TEST_CASE("constraint set follows the better validation accuracy") {
  CHECK(build_constraint_set(0.9, 0.8).active == Modality::kFirst);
  CHECK(build_constraint_set(0.7, 0.8).active == Modality::kSecond);
  CHECK(build_constraint_set(0.8, 0.8).active == Modality::kFirst);
  CHECK(build_constraint_set(0.8, 0.8, 0.95).tau == 0.95);
}

TEST_CASE("selection needs confidence and agreement with the mean label") {
  const std::vector<ClassIndex> enc = {0, 1, 2, 1};
  const std::vector<double> conf = {0.95, 0.99, 0.5, 0.9};
  const std::vector<ClassIndex> mean = {0, 2, 2, 1};
  const auto sel = select_from_evidence(enc, conf, mean, 0.9);
  CHECK(sel.indices == std::vector<std::size_t>{0, 3});
  CHECK(sel.labels == std::vector<ClassIndex>{0, 1});
  CHECK(sel.evidence.size() == 4);
  CHECK_FALSE(sel.evidence[1].accepted);
}

TEST_CASE("raising tau never grows the accepted set") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<ClassIndex> enc(500), mean(500);
  std::vector<double> conf(500);
  for (std::size_t j = 0; j < 500; ++j) {
    enc[j] = cls(rng);
    mean[j] = u(rng) < 0.7 ? enc[j] : cls(rng);
    conf[j] = u(rng);
  }
  std::set<std::size_t> prev;
  bool first = true;
  for (const double tau : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const auto sel = select_from_evidence(enc, conf, mean, tau);
    const std::set<std::size_t> cur(sel.indices.begin(), sel.indices.end());
    if (!first) {
      for (const auto j : cur) CHECK(prev.count(j) == 1);
    }
    prev = cur;
    first = false;
  }
}

TEST_CASE("lpf input remaps seen classes and marks outsiders") {
  const auto ds = small_synth();
  SplitSpec sp = small_split();
  sp.open_set = OpenSetSpec{1, {1}, 0.5};
  const auto splits = make_open_set_splits(ds, sp);
  const auto in = make_lpf_input(ds, splits);
  in.validate();
  CHECK(in.num_classes == 2);
  for (const auto y : in.train_labels) CHECK((y == 0 || y == 1));
  std::size_t outsiders = 0;
  for (std::size_t j = 0; j < in.unlabeled_truth.size(); ++j) {
    const auto truth = in.unlabeled_truth[j];
    const auto original = ds.labels[in.unlabeled_source[j]];
    if (original == 1) {
      CHECK(truth == kOutOfClass);
      ++outsiders;
    } else {
      CHECK(truth == (original == 0 ? 0 : 1));
    }
  }
  CHECK(outsiders > 0);
}

TEST_CASE("run_lpf records consistent history and an expanded set") {
  const auto ds = small_synth();
  const auto splits = make_splits(ds, small_split());
  const auto in = make_lpf_input(ds, splits);
  const auto cfg = tiny_config();
  const auto res = run_lpf(in, cfg);
  const auto& h = res.pool.history;
  REQUIRE_FALSE(h.empty());
  CHECK(h.size() <= cfg.max_iterations);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(h[i].iteration == i + 1);
    CHECK(h[i].active == (h[i].cf_1 >= h[i].cf_2 ? Modality::kFirst : Modality::kSecond));
    CHECK(h[i].out_of_class == 0);
  }
  if (h.size() < cfg.max_iterations) {
    REQUIRE(h.size() >= 2);
    CHECK(h.back().pool_size == h[h.size() - 2].pool_size);
  }
  CHECK(res.pool.selected_indices.size() == h.back().pool_size);
  CHECK(res.expanded_labels.size() == in.train_labels.size() + h.back().pool_size);
  CHECK(res.expanded_features[0].cols() == static_cast<Eigen::Index>(res.expanded_labels.size()));
  CHECK(res.expanded_features[1].col(0) == in.train[1].col(0));
  for (std::size_t i = 0; i < res.pool.selected_indices.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(res.pool.selected_indices[i]);
    CHECK(res.expanded_features[0].col(static_cast<Eigen::Index>(in.train_labels.size() + i)) ==
          in.unlabeled[0].col(j));
  }
}

TEST_CASE("run_lpf is deterministic for a fixed seed") {
  const auto ds = small_synth();
  const auto splits = make_splits(ds, small_split());
  const auto a = run_lpf(ds, splits, tiny_config());
  const auto b = run_lpf(ds, splits, tiny_config());
  CHECK(a.pool.selected_indices == b.pool.selected_indices);
  CHECK(a.pool.assigned_labels == b.pool.assigned_labels);
  CHECK(a.models[0].encoder.layers[0].weights == b.models[0].encoder.layers[0].weights);
}

TEST_CASE("run_lpf skips the loop when there is nothing unlabeled") {
  const auto ds = small_synth();
  SplitSpec sp = small_split();
  sp.rho = 1.0;
  const auto in = make_lpf_input(ds, make_splits(ds, sp));
  REQUIRE(in.unlabeled[0].cols() == 0);
  const auto res = run_lpf(in, tiny_config());
  CHECK(res.pool.history.empty());
  CHECK(res.expanded_labels == in.train_labels);
}

TEST_CASE("lpf config validation") {
  LpfConfig c;
  c.validate();
  c.tau = 0.0;
  CHECK_THROWS(c.validate());
  c = LpfConfig{};
  c.dropout = 1.0;
  CHECK_THROWS(c.validate());
}
