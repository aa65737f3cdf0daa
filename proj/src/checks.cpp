#include "lpf/checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lpf/eval.hpp"
#include "lpf/label_prediction.hpp"
#include "lpf/losses.hpp"
#include "lpf/model.hpp"

namespace lpf::checks {

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * unit(rng);
  return m;
}

// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from
// turning round-off into large ratios.
constexpr double kRelativeFloor = 1e-3;

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
}

// Brute-force AP: for every relevant rank, rescan the prefix to count hits.
double brute_force_ap(const std::vector<int>& flags) {
  long double sum = 0.0L;
  long double relevant = 0.0L;
  for (std::size_t r = 0; r < flags.size(); ++r) {
    if (!flags[r]) continue;
    long double hits_up_to_r = 0.0L;
    for (std::size_t i = 0; i <= r; ++i) hits_up_to_r += flags[i] ? 1.0L : 0.0L;
    sum += hits_up_to_r / static_cast<long double>(r + 1);
    relevant += 1.0L;
  }
  return relevant == 0.0L ? 0.0 : static_cast<double>(sum / relevant);
}

// Plain-loop encoder forward to the softmax, independent of nn_core.
std::vector<double> reference_softmax(const EncoderDecoder& model, const Vector& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < model.encoder.depth(); ++l) {
    const auto& layer = model.encoder.layers[l];
    std::vector<double> z(static_cast<std::size_t>(layer.out_size()));
    for (Eigen::Index i = 0; i < layer.out_size(); ++i) {
      double s = layer.bias(i);
      for (Eigen::Index k = 0; k < layer.in_size(); ++k) s += layer.weights(i, k) * a[static_cast<std::size_t>(k)];
      z[static_cast<std::size_t>(i)] = (l + 1 < model.encoder.depth()) ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  const double mx = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (auto& v : a) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : a) v /= total;
  return a;
}

}  // namespace

CheckResult gradient_oracle(std::uint64_t seed) {
  CheckResult result{"gradient oracle", true, ""};
  Rng rng(derive_seed(seed, "gradient-oracle"));
  EncoderDecoder model = init_model(4, 3, derive_seed(seed, "gradient-model"), 6, 0.3);
  model.centers = random_matrix(3, 6, rng, 0.5);
  // Non-zero biases keep pre-activations off the ReLU kink; with zero biases a
  // sample whose hidden units all die yields logits of exactly 0.
  for (auto* net : {&model.encoder, &model.decoder}) {
    for (auto& layer : net->layers) layer.bias = random_matrix(layer.out_size(), 1, rng, 0.1);
  }
  const Matrix inputs = random_matrix(4, 5, rng);
  const std::vector<ClassIndex> labels = {0, 2, kUnlabeled, 1, kUnlabeled};
  const std::uint64_t dropout_seed = derive_seed(seed, "gradient-dropout");

  struct Case {
    const char* name;
    LossWeights weights;
  };
  const Case cases[] = {
      {"ce", {1.0, 0.0, 0.0, 0.0}},
      {"center", {0.0, 1.0, 0.0, 0.0}},
      {"entropy", {0.0, 0.0, 1.0, 0.0}},
      {"reconstruction", {0.0, 0.0, 0.0, 1.0}},
      {"total", LossWeights{}},
  };

  std::ostringstream detail;
  for (const auto& c : cases) {
    // Train mode with a re-seeded rng replays identical dropout masks.
    auto objective = [&](const EncoderDecoder& m) {
      Rng drop(dropout_seed);
      return evaluate_objective(m, inputs, labels, c.weights, true, &drop);
    };
    const ObjectiveResult analytic = objective(model);
    double worst = 0.0;
    EncoderDecoder probe = model;
    auto sweep = [&](Network EncoderDecoder::*net, const Gradients& grads) {
      for (std::size_t l = 0; l < (probe.*net).depth(); ++l) {
        auto& layer = (probe.*net).layers[l];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
          double& p = layer.weights.data()[i];
          const double saved = p;
          p = saved + kFiniteDifferenceStep;
          const double up = objective(probe).total;
          p = saved - kFiniteDifferenceStep;
          const double down = objective(probe).total;
          p = saved;
          const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
          worst = std::max(worst, relative_error(grads.layers[l].weights.data()[i], numeric));
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
          double& p = layer.bias(i);
          const double saved = p;
          p = saved + kFiniteDifferenceStep;
          const double up = objective(probe).total;
          p = saved - kFiniteDifferenceStep;
          const double down = objective(probe).total;
          p = saved;
          const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
          worst = std::max(worst, relative_error(grads.layers[l].bias(i), numeric));
        }
      }
    };
    sweep(&EncoderDecoder::encoder, analytic.encoder);
    sweep(&EncoderDecoder::decoder, analytic.decoder);
    detail << c.name << "=" << worst << " ";
    if (!(worst <= kGradientTolerance)) result.passed = false;
  }
  result.detail = "max relative error: " + detail.str();
  return result;
}

CheckResult loss_fixed_points() {
  CheckResult result{"loss fixed points", true, ""};
  std::ostringstream detail;
  auto expect = [&](const char* what, double value, double target, double tol) {
    if (!(std::abs(value - target) <= tol)) {
      result.passed = false;
      detail << what << "=" << value << " (want " << target << ") ";
    }
  };

  Matrix onehot = Matrix::Zero(3, 3);
  onehot(0, 0) = onehot(2, 1) = onehot(1, 2) = 1.0;
  const std::vector<ClassIndex> labels = {0, 2, 1};
  expect("ce(one-hot)", cross_entropy(onehot, labels).value, 0.0, 0.0);

  Matrix centers(3, 2);
  centers << 1, 2, -1, 0.5, 3, 3;
  Matrix at_centers(2, 3);
  at_centers.col(0) = centers.row(0).transpose();
  at_centers.col(1) = centers.row(2).transpose();
  at_centers.col(2) = centers.row(1).transpose();
  expect("center(at centers)", center_loss(at_centers, labels, centers).value, 0.0, 0.0);

  expect("entropy(one-hot)", entropy_regularization(onehot).value, 0.0, 0.0);
  const Matrix uniform = Matrix::Constant(8, 1, 1.0 / 8.0);
  expect("entropy(uniform C=8)", entropy_regularization(uniform).value, std::log(8.0), 1e-9);

  const Matrix x = Matrix::Random(4, 3);
  expect("reconstruction(perfect)", reconstruction(x, x).value, 0.0, 0.0);
  result.detail = detail.str().empty() ? "all terms at their optimum" : detail.str();
  return result;
}

CheckResult map_oracle(std::uint64_t seed) {
  CheckResult result{"MAP oracle", true, ""};
  Rng rng(derive_seed(seed, "map-oracle"));
  constexpr std::size_t kQueries = 20, kItems = 100, kR = 50;
  std::uniform_int_distribution<int> label(0, 4);

  RetrievalRun run;
  for (std::size_t i = 0; i < kItems; ++i) run.database_labels.push_back(label(rng));
  for (std::size_t q = 0; q < kQueries; ++q) {
    run.query_labels.push_back(label(rng));
    std::vector<std::size_t> perm(kItems);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    run.ranked.push_back(std::move(perm));
  }

  double oracle = 0.0;
  for (std::size_t q = 0; q < kQueries; ++q) {
    std::vector<int> flags;
    for (std::size_t r = 0; r < kR; ++r) {
      flags.push_back(run.database_labels[run.ranked[q][r]] == run.query_labels[q]);
    }
    oracle += brute_force_ap(flags);
  }
  oracle /= static_cast<double>(kQueries);
  const double got = map_at_r(run, kR);

  const std::vector<int> hand = {1, 0, 1};
  const double hand_ap = average_precision(hand);
  result.passed = got == oracle && hand_ap == 5.0 / 6.0;
  std::ostringstream detail;
  detail.precision(17);
  detail << "map_at_r=" << got << " brute_force=" << oracle << " ap(1,0,1)=" << hand_ap;
  result.detail = detail.str();
  return result;
}

CheckResult selection_properties(std::uint64_t seed, std::size_t samples) {
  CheckResult result{"selection properties", true, ""};
  Rng rng(derive_seed(seed, "selection-check"));
  constexpr int kClasses = 4;
  std::array<EncoderDecoder, 2> models = {
      init_model(5, kClasses, derive_seed(seed, "selection-model", 0), 8, 0.0),
      init_model(6, kClasses, derive_seed(seed, "selection-model", 1), 8, 0.0)};
  // Sharpen the softmax so both thresholds see accepted and rejected samples.
  for (auto& m : models) m.encoder.layers.back().weights *= 6.0;

  MeanFeatureBank bank;
  bank.means[0] = random_matrix(kClasses, 5, rng, 2.0);
  bank.means[1] = random_matrix(kClasses, 6, rng, 2.0);
  const auto n = static_cast<Eigen::Index>(samples);
  const ModalityPair unlabeled = {random_matrix(5, n, rng, 2.0), random_matrix(6, n, rng, 2.0)};

  std::size_t violations = 0, not_subset = 0, accepted_hi = 0, accepted_lo = 0;
  for (const Modality active : {Modality::kFirst, Modality::kSecond}) {
    const auto t = static_cast<std::size_t>(index_of(active));
    const auto decision_lo = active == Modality::kFirst ? build_constraint_set(0.7, 0.6, 0.5)
                                                        : build_constraint_set(0.6, 0.7, 0.5);
    auto decision_hi = decision_lo;
    decision_hi.tau = 0.95;
    if (decision_lo.active != active) ++violations;

    const Selection lo = select_pseudo_labels(models, bank, unlabeled, decision_lo);
    const Selection hi = select_pseudo_labels(models, bank, unlabeled, decision_hi);
    accepted_hi += hi.indices.size();
    accepted_lo += lo.indices.size();
    for (const auto j : hi.indices) {
      if (!std::binary_search(lo.indices.begin(), lo.indices.end(), j)) ++not_subset;
    }

    for (const auto* sel : {&lo, &hi}) {
      const double tau = sel == &lo ? decision_lo.tau : decision_hi.tau;
      std::vector<bool> accepted(samples, false);
      for (std::size_t i = 0; i < sel->indices.size(); ++i) {
        const auto j = sel->indices[i];
        accepted[j] = true;
        // The assigned label must be the active modality's nearest-mean label.
        const Vector x = unlabeled[t].col(static_cast<Eigen::Index>(j));
        std::size_t nearest = 0;
        for (Eigen::Index k = 1; k < kClasses; ++k) {
          if ((bank.means[t].row(k).transpose() - x).squaredNorm() <
              (bank.means[t].row(static_cast<Eigen::Index>(nearest)).transpose() - x).squaredNorm()) {
            nearest = static_cast<std::size_t>(k);
          }
        }
        if (sel->labels[i] != static_cast<ClassIndex>(nearest)) ++violations;
      }
      for (std::size_t j = 0; j < samples; ++j) {
        const Vector x = unlabeled[t].col(static_cast<Eigen::Index>(j));
        const auto p = reference_softmax(models[t], x);
        const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        std::size_t nearest = 0;
        double best = (bank.means[t].row(0).transpose() - x).squaredNorm();
        for (Eigen::Index k = 1; k < kClasses; ++k) {
          const double d = (bank.means[t].row(k).transpose() - x).squaredNorm();
          if (d < best) {
            best = d;
            nearest = static_cast<std::size_t>(k);
          }
        }
        const bool should = p[top] >= tau && top == nearest;
        if (should != accepted[j]) ++violations;
      }
    }
  }
  result.passed = violations == 0 && not_subset == 0 && accepted_hi > 0 && accepted_lo > accepted_hi;
  std::ostringstream detail;
  detail << samples << " pairs x 2 active sides: accepted@0.95=" << accepted_hi
         << " accepted@0.5=" << accepted_lo << " subset violations=" << not_subset
         << " condition violations=" << violations;
  result.detail = detail.str();
  return result;
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {gradient_oracle(seed), loss_fixed_points(), map_oracle(seed),
          selection_properties(seed)};
}

}  // namespace lpf::checks
