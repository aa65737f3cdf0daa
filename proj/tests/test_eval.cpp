#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "lpf/eval.hpp"

using namespace lpf;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("average precision on hand-checked lists") {
  CHECK(average_precision(std::vector<int>{1, 0, 1}) == 5.0 / 6.0);
  CHECK(average_precision(std::vector<int>{0, 1, 1, 0}) == doctest::Approx(0.5833333333333333));
  CHECK(average_precision(std::vector<int>{1, 0, 0, 0, 1}) == doctest::Approx(0.7));
  CHECK(average_precision(std::vector<int>{0, 0, 0}) == 0.0);
  CHECK(average_precision(std::vector<int>{1, 1, 1, 1}) == 1.0);
}

TEST_CASE("moving a relevant item up never lowers AP") {
  Rng rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> flags(12);
    for (auto& f : flags) f = coin(rng) ? 1 : 0;
    const double ap = average_precision(flags);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    for (std::size_t i = 1; i < flags.size(); ++i) {
      if (flags[i] == 1 && flags[i - 1] == 0) {
        auto better = flags;
        std::swap(better[i], better[i - 1]);
        CHECK(average_precision(better) >= ap);
      }
    }
  }
}

TEST_CASE("map_at_r averages per-query AP over the top R") {
  RetrievalRun run;
  run.database_labels = {0, 1, 0, 1};
  run.query_labels = {0, 1};
  run.ranked = {{0, 1, 2, 3}, {0, 1, 2, 3}};
  // query 0: flags 1,0,1 -> 5/6; query 1: flags 0,1,0 -> 1/2
  CHECK(map_at_r(run, 3) == doctest::Approx((5.0 / 6.0 + 0.5) / 2.0));
  CHECK_THROWS_AS(map_at_r(run, 5), std::invalid_argument);
  CHECK_THROWS(map_at_r(run, 0));
}

TEST_CASE("ranking matches an exhaustive pairwise-similarity sort") {
  const Matrix q = gaussian(5, 10, 1);
  const Matrix d = gaussian(5, 10, 2);
  const auto ranking = rank_by_similarity(q, d);
  CHECK(ranking.zero_norm_count == 0);
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double cos = q.col(i).dot(d.col(j)) / (q.col(i).norm() * d.col(j).norm());
      scored.emplace_back(-cos, static_cast<std::size_t>(j));
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::size_t> expected;
    for (const auto& s : scored) expected.push_back(s.second);
    CHECK(ranking.lists[static_cast<std::size_t>(i)] == expected);
  }
}

TEST_CASE("ranking ignores vector scale and orders ties by index") {
  const Matrix q = gaussian(4, 3, 5);
  const Matrix d = gaussian(4, 8, 6);
  Matrix d_scaled = d;
  for (Eigen::Index j = 0; j < d.cols(); ++j) d_scaled.col(j) *= 0.5 + static_cast<double>(j);
  CHECK(rank_by_similarity(q, d).lists == rank_by_similarity(3.0 * q, d_scaled).lists);

  Matrix dup(2, 3);
  dup << 1, 1, 1, 0, 0, 0;
  Matrix one(2, 1);
  one << 1, 0;
  CHECK(rank_by_similarity(one, dup).lists[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("zero-norm items rank last and are counted") {
  Matrix d(2, 3);
  d << 0, -1, 1, 0, 0, 1;
  Matrix q(2, 1);
  q << 1, 0;
  const auto r = rank_by_similarity(q, d);
  CHECK(r.lists[0] == std::vector<std::size_t>{2, 1, 0});
  CHECK(r.zero_norm_count == 1);
  CHECK_THROWS_AS(rank_by_similarity(Matrix::Ones(3, 1), d), ShapeError);
}

TEST_CASE("ridge retriever matches the closed-form solution") {
  Matrix f(2, 5);
  f << 0, 1, 2, 3, 4, 1, 0, 1, 0, 1;
  const ModalityPair x{f, f};
  const std::vector<ClassIndex> y = {0, 0, 1, 1, 1};
  const auto ret = fit_linear_label_retriever(x, y, 2, 1e-3);
  const double expected[2][3] = {{-0.29975025135902, -0.1659789168630038, 1.0988680792199983},
                                 {0.2999500515987039, 0.16647805146677047, -0.09976698068133394}};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      CHECK(ret.maps[0](r, c) == doctest::Approx(expected[r][c]).epsilon(1e-10));
    }
  }
  const Matrix e = ret.embed(Modality::kFirst, f);
  CHECK(e.rows() == 2);
  CHECK(e.cols() == 5);
  CHECK_THROWS_AS(ret.embed(Modality::kFirst, Matrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("stronger ridge shrinks the projection") {
  const ModalityPair x{gaussian(6, 40, 1), gaussian(4, 40, 2)};
  std::vector<ClassIndex> y(40);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = static_cast<ClassIndex>(j % 3);
  double prev = 1e300;
  for (const double lambda : {1e-3, 1e-1, 1e1, 1e3}) {
    const double norm = fit_linear_label_retriever(x, y, 3, lambda).maps[1].norm();
    CHECK(norm < prev);
    prev = norm;
  }
}

TEST_CASE("per-class accuracy skips empty classes") {
  const std::vector<ClassIndex> pred = {0, 1, 1, 2};
  const std::vector<ClassIndex> truth = {0, 1, 0, 2};
  const auto acc = per_class_accuracy(pred, truth, 4);
  CHECK(*acc[0] == 0.5);
  CHECK(*acc[1] == 1.0);
  CHECK(*acc[2] == 1.0);
  CHECK_FALSE(acc[3].has_value());
}

TEST_CASE("mode names round trip") {
  for (const auto m : {Mode::kFull, Mode::kLabeled, Mode::kSemiSupervised}) {
    CHECK(parse_mode(name_of(m)) == m);
  }
  CHECK(name_of(Mode::kSemiSupervised) == "ss");
  CHECK_FALSE(parse_mode("x").has_value());
}

TEST_CASE("retrieval on perfectly separable data scores 1") {
  Matrix f1 = Matrix::Zero(3, 60), f2 = Matrix::Zero(2, 60);
  std::vector<ClassIndex> y(60);
  for (Eigen::Index j = 0; j < 60; ++j) {
    const auto k = static_cast<ClassIndex>(j % 3);
    y[static_cast<std::size_t>(j)] = k;
    f1(k, j) = 1.0;
    f2(0, j) = k == 0 ? 1.0 : 0.0;
    f2(1, j) = k == 1 ? 1.0 : 0.0;
  }
  const ModalityPair x{f1, f2};
  const auto ret = fit_linear_label_retriever(x, y, 3);
  const auto rep = evaluate_retrieval(ret, x, y, 20, Mode::kLabeled);
  CHECK(rep.map_i2t == doctest::Approx(1.0));
  CHECK(rep.map_t2i == doctest::Approx(1.0));
  CHECK(rep.r == 20);
}
