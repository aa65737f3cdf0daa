#include "lpf/label_prediction.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "lpf/eval.hpp"

namespace lpf {

namespace {

Matrix gather(const Matrix& m, const std::vector<std::size_t>& idx) {
  return gather_columns(m, idx);
}

// Validation cross-entropy, used to break accuracy ties during early stopping.
double validation_ce(const EncoderDecoder& model, const Matrix& inputs,
                     std::span<const ClassIndex> labels) {
  return cross_entropy(encode(model, inputs, false).x_softmax, labels).value;
}

// One pass over `labeled`. Each labeled mini-batch is joined by an equally
// sized batch of unlabeled columns, cycling through a fresh permutation.
void run_epoch(EncoderDecoder& model, const Matrix& labeled,
               std::span<const ClassIndex> labels, const Matrix& unlabeled,
               const LpfConfig& config, double learning_rate, Rng& rng) {
  const auto n_lab = static_cast<std::size_t>(labeled.cols());
  const auto n_unl = static_cast<std::size_t>(unlabeled.cols());
  std::vector<std::size_t> order(n_lab), companion(n_unl);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::iota(companion.begin(), companion.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::shuffle(companion.begin(), companion.end(), rng);

  const Eigen::Index d = labeled.rows();
  std::size_t cursor = 0;
  for (std::size_t start = 0; start < n_lab; start += config.batch_size) {
    const std::size_t b = std::min(config.batch_size, n_lab - start);
    const std::size_t u = std::min(b, n_unl);
    Matrix batch(d, static_cast<Eigen::Index>(b + u));
    std::vector<ClassIndex> batch_labels(b + u, kUnlabeled);
    for (std::size_t i = 0; i < b; ++i) {
      batch.col(static_cast<Eigen::Index>(i)) =
          labeled.col(static_cast<Eigen::Index>(order[start + i]));
      batch_labels[i] = labels[order[start + i]];
    }
    for (std::size_t i = 0; i < u; ++i) {
      batch.col(static_cast<Eigen::Index>(b + i)) =
          unlabeled.col(static_cast<Eigen::Index>(companion[cursor]));
      cursor = (cursor + 1) % n_unl;
    }
    const auto result =
        evaluate_objective(model, batch, batch_labels, config.weights, true, &rng);
    apply_update(model, result, learning_rate, config.center_lr_multiplier * learning_rate);
  }
}

double accuracy_of(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) hits += predicted[j] == truth[j] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace

MeanFeatureBank compute_class_means(const ModalityPair& labeled_features,
                                    std::span<const ClassIndex> labels, int num_classes) {
  MeanFeatureBank bank;
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto l : labels) {
    if (l < 0 || l >= num_classes) {
      throw NumericError("compute_class_means: label " + std::to_string(l) + " out of range");
    }
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw std::invalid_argument("compute_class_means: class " + std::to_string(k) +
                                  " has no labeled samples");
    }
  }
  for (std::size_t t = 0; t < 2; ++t) {
    const Matrix& x = labeled_features[t];
    if (x.cols() != static_cast<Eigen::Index>(labels.size())) {
      throw ShapeError("compute_class_means: feature/label count mismatch");
    }
    bank.means[t] = Matrix::Zero(num_classes, x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      bank.means[t].row(labels[static_cast<std::size_t>(j)]) += x.col(j).transpose();
    }
    for (int k = 0; k < num_classes; ++k) {
      bank.means[t].row(k) /= counts[static_cast<std::size_t>(k)];
    }
  }
  return bank;
}

ClassIndex mean_feature_predict(const MeanFeatureBank& bank, const Vector& sample,
                                Modality modality) {
  const Matrix& means = bank.means[static_cast<std::size_t>(index_of(modality))];
  if (sample.size() != means.cols()) {
    throw ShapeError("mean_feature_predict: sample has " + std::to_string(sample.size()) +
                     " dims, means have " + std::to_string(means.cols()));
  }
  ClassIndex best = 0;
  double best_dist = (means.row(0).transpose() - sample).squaredNorm();
  for (Eigen::Index k = 1; k < means.rows(); ++k) {
    const double dist = (means.row(k).transpose() - sample).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<ClassIndex>(k);
    }
  }
  return best;
}

std::vector<ClassIndex> mean_feature_predict(const MeanFeatureBank& bank,
                                             const Matrix& samples, Modality modality) {
  std::vector<ClassIndex> out(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    out[static_cast<std::size_t>(j)] = mean_feature_predict(bank, Vector(samples.col(j)), modality);
  }
  return out;
}

double validation_accuracy(const EncoderDecoder& model, const Matrix& inputs,
                           std::span<const ClassIndex> labels) {
  if (inputs.cols() == 0) throw std::invalid_argument("validation_accuracy: empty validation set");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) {
    throw ShapeError("validation_accuracy: label count mismatch");
  }
  return accuracy_of(predict_label(model, inputs).labels, labels);
}

ConstraintDecision build_constraint_set(double cf_1, double cf_2, double tau) {
  return {cf_1 >= cf_2 ? Modality::kFirst : Modality::kSecond, cf_1, cf_2, tau};
}

Selection select_from_evidence(std::span<const ClassIndex> encoder_labels,
                               std::span<const double> confidences,
                               std::span<const ClassIndex> mean_labels, double tau) {
  Selection sel;
  sel.evidence.resize(encoder_labels.size());
  for (std::size_t j = 0; j < encoder_labels.size(); ++j) {
    auto& ev = sel.evidence[j];
    ev.encoder_label = encoder_labels[j];
    ev.mean_label = mean_labels[j];
    ev.confidence = confidences[j];
    ev.accepted = ev.confidence >= tau && ev.encoder_label == ev.mean_label;
    if (ev.accepted) {
      sel.indices.push_back(j);
      sel.labels.push_back(ev.encoder_label);
    }
  }
  return sel;
}

Selection select_pseudo_labels(const std::array<EncoderDecoder, 2>& models,
                               const MeanFeatureBank& bank, const ModalityPair& unlabeled,
                               const ConstraintDecision& decision) {
  const auto t = static_cast<std::size_t>(index_of(decision.active));
  if (unlabeled[0].cols() != unlabeled[1].cols()) {
    throw ShapeError("select_pseudo_labels: unpaired unlabeled sets");
  }
  const Prediction pred = predict_label(models[t], unlabeled[t]);
  const auto mean_labels = mean_feature_predict(bank, unlabeled[t], decision.active);
  return select_from_evidence(pred.labels, pred.confidences, mean_labels, decision.tau);
}

void LpfConfig::validate() const {
  weights.validate();
  if (!(learning_rate > 0) || !(finetune_learning_rate > 0)) {
    throw std::invalid_argument("learning rates must be > 0");
  }
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (batch_size < 1 || epochs < 1) throw std::invalid_argument("batch_size and epochs must be >= 1");
  if (hidden < 1) throw std::invalid_argument("hidden width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (center_lr_multiplier < 0) throw std::invalid_argument("center_lr_multiplier must be >= 0");
}

void LpfInput::validate() const {
  for (std::size_t t = 0; t < 2; ++t) {
    if (train[t].cols() != static_cast<Eigen::Index>(train_labels.size()) ||
        validation[t].cols() != static_cast<Eigen::Index>(validation_labels.size()) ||
        unlabeled[t].cols() != unlabeled[0].cols()) {
      throw ShapeError("LpfInput: partitions are not paired with their labels");
    }
    if (train[t].rows() != validation[t].rows() ||
        (unlabeled[t].cols() > 0 && unlabeled[t].rows() != train[t].rows())) {
      throw ShapeError("LpfInput: feature dimensions differ across partitions");
    }
  }
  if (!unlabeled_truth.empty() &&
      unlabeled_truth.size() != static_cast<std::size_t>(unlabeled[0].cols())) {
    throw ShapeError("LpfInput: ground truth does not cover the unlabeled set");
  }
  if (num_classes < 2) throw std::invalid_argument("LpfInput: need at least 2 classes");
  if (validation_labels.empty()) throw std::invalid_argument("LpfInput: empty validation set");
}

LpfInput make_lpf_input(const PairedDataset& ds, const Splits& splits) {
  std::vector<ClassIndex> remap(static_cast<std::size_t>(ds.num_classes()), kOutOfClass);
  for (std::size_t i = 0; i < splits.seen_classes.size(); ++i) {
    remap[static_cast<std::size_t>(splits.seen_classes[i])] = static_cast<ClassIndex>(i);
  }
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<ClassIndex> out;
    out.reserve(idx.size());
    for (const auto j : idx) out.push_back(remap[static_cast<std::size_t>(ds.labels[j])]);
    return out;
  };
  const auto tr = splits.indices(Partition::kTrain);
  const auto va = splits.indices(Partition::kValidation);
  const auto ul = splits.indices(Partition::kUnlabeled);

  LpfInput in;
  in.num_classes = static_cast<int>(splits.seen_classes.size());
  for (std::size_t t = 0; t < 2; ++t) {
    const Matrix& x = ds.features(static_cast<Modality>(t));
    in.train[t] = gather(x, tr);
    in.validation[t] = gather(x, va);
    in.unlabeled[t] = gather(x, ul);
  }
  in.train_labels = labels_of(tr);
  in.validation_labels = labels_of(va);
  in.unlabeled_truth = labels_of(ul);
  in.unlabeled_source = ul;
  return in;
}

std::size_t train_initial(EncoderDecoder& model, const Matrix& train,
                          std::span<const ClassIndex> train_labels, const Matrix& validation,
                          std::span<const ClassIndex> validation_labels,
                          const Matrix& unlabeled, const LpfConfig& config, Rng& rng) {
  init_centers(model, train, train_labels);
  EncoderDecoder best = model;
  double best_acc = validation_accuracy(model, validation, validation_labels);
  double best_ce = validation_ce(model, validation, validation_labels);
  std::size_t since_best = 0;
  std::size_t epoch = 0;
  while (epoch < config.epochs) {
    const double lr = epoch < config.lr_decay_epoch ? config.learning_rate
                                                    : config.learning_rate * config.lr_decay;
    run_epoch(model, train, train_labels, unlabeled, config, lr, rng);
    ++epoch;
    const double acc = validation_accuracy(model, validation, validation_labels);
    const double ce = validation_ce(model, validation, validation_labels);
    if (acc > best_acc || (acc == best_acc && ce < best_ce)) {
      best = model;
      best_acc = acc;
      best_ce = ce;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model = std::move(best);
  return epoch;
}

void fine_tune(EncoderDecoder& model, const Matrix& labeled,
               std::span<const ClassIndex> labels, const Matrix& unlabeled,
               const LpfConfig& config, Rng& rng) {
  for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    run_epoch(model, labeled, labels, unlabeled, config, config.finetune_learning_rate, rng);
  }
}

LpfResult run_lpf(const LpfInput& input, const LpfConfig& config) {
  input.validate();
  config.validate();
  const int num_classes = input.num_classes;
  const auto n_unl = static_cast<std::size_t>(input.unlabeled[0].cols());

  LpfResult result;
  std::array<Rng, 2> rngs;
  for (std::size_t t = 0; t < 2; ++t) {
    result.models[t] = init_model(input.train[t].rows(), num_classes,
                                  derive_seed(config.seed, "init", t), config.hidden,
                                  config.dropout);
    rngs[t].seed(derive_seed(config.seed, "train", t));
  }

  for (std::size_t t = 0; t < 2; ++t) {
    const auto epochs =
        train_initial(result.models[t], input.train[t], input.train_labels,
                      input.validation[t], input.validation_labels, input.unlabeled[t],
                      config, rngs[t]);
    result.initial_epochs = std::max(result.initial_epochs, epochs);
  }

  // Means come from the original features of all labeled data.
  ModalityPair labeled_x;
  std::vector<ClassIndex> labeled_y = input.train_labels;
  labeled_y.insert(labeled_y.end(), input.validation_labels.begin(),
                   input.validation_labels.end());
  for (std::size_t t = 0; t < 2; ++t) {
    labeled_x[t].resize(input.train[t].rows(), input.train[t].cols() + input.validation[t].cols());
    labeled_x[t] << input.train[t], input.validation[t];
  }
  const MeanFeatureBank bank = compute_class_means(labeled_x, labeled_y, num_classes);

  auto& pool = result.pool;
  Selection selection;
  std::optional<std::size_t> previous;
  for (std::size_t it = 1; n_unl > 0 && it <= config.max_iterations; ++it) {
    const double cf_1 =
        validation_accuracy(result.models[0], input.validation[0], input.validation_labels);
    const double cf_2 =
        validation_accuracy(result.models[1], input.validation[1], input.validation_labels);
    const auto decision = build_constraint_set(cf_1, cf_2, config.tau);
    selection = select_pseudo_labels(result.models, bank, input.unlabeled, decision);

    IterationRecord rec;
    rec.iteration = it;
    rec.cf_1 = cf_1;
    rec.cf_2 = cf_2;
    rec.active = decision.active;
    rec.pool_size = selection.indices.size();
    if (!input.unlabeled_truth.empty()) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < selection.indices.size(); ++i) {
        const auto truth = input.unlabeled_truth[selection.indices[i]];
        correct += truth == selection.labels[i] ? 1 : 0;
        rec.out_of_class += truth == kOutOfClass ? 1 : 0;
      }
      if (!selection.indices.empty()) {
        rec.pool_accuracy =
            static_cast<double>(correct) / static_cast<double>(selection.indices.size());
      }
      std::vector<std::size_t> in_class;
      std::vector<ClassIndex> in_truth;
      for (std::size_t j = 0; j < n_unl; ++j) {
        if (input.unlabeled_truth[j] >= 0) {
          in_class.push_back(j);
          in_truth.push_back(input.unlabeled_truth[j]);
        }
      }
      if (!in_class.empty()) {
        for (std::size_t t = 0; t < 2; ++t) {
          const auto pred =
              predict_label(result.models[t], gather(input.unlabeled[t], in_class));
          rec.unlabeled_accuracy[t] = accuracy_of(pred.labels, in_truth);
          rec.per_class_accuracy[t] = per_class_accuracy(pred.labels, in_truth, num_classes);
        }
      }
    }
    pool.history.push_back(std::move(rec));

    if (previous && *previous == selection.indices.size()) break;
    previous = selection.indices.size();

    // Expanded labeled set: training data plus the accepted pairs; the rest of
    // the unlabeled pool keeps contributing unlabeled terms.
    std::vector<std::size_t> rest;
    std::vector<bool> taken(n_unl, false);
    for (const auto j : selection.indices) taken[j] = true;
    for (std::size_t j = 0; j < n_unl; ++j) {
      if (!taken[j]) rest.push_back(j);
    }
    std::vector<ClassIndex> expanded_labels = input.train_labels;
    expanded_labels.insert(expanded_labels.end(), selection.labels.begin(),
                           selection.labels.end());
    for (std::size_t t = 0; t < 2; ++t) {
      const Matrix picked = gather(input.unlabeled[t], selection.indices);
      Matrix expanded(input.train[t].rows(), input.train[t].cols() + picked.cols());
      expanded << input.train[t], picked;
      fine_tune(result.models[t], expanded, expanded_labels, gather(input.unlabeled[t], rest),
                config, rngs[t]);
    }
  }

  pool.selected_indices = selection.indices;
  pool.assigned_labels = selection.labels;
  result.expanded_labels = input.train_labels;
  result.expanded_labels.insert(result.expanded_labels.end(), selection.labels.begin(),
                                selection.labels.end());
  for (std::size_t t = 0; t < 2; ++t) {
    const Matrix picked = gather(input.unlabeled[t], selection.indices);
    result.expanded_features[t].resize(input.train[t].rows(),
                                       input.train[t].cols() + picked.cols());
    result.expanded_features[t] << input.train[t], picked;
  }
  return result;
}

LpfResult run_lpf(const PairedDataset& ds, const Splits& splits, const LpfConfig& config) {
  return run_lpf(make_lpf_input(ds, splits), config);
}

}  // namespace lpf
