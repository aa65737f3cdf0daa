#include "lpf/model.hpp"

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace lpf {

namespace {

constexpr const char* kCheckpointMagic = "lpf-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const char* tag, const Matrix& m) {
  out << tag << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << m(r, c);
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& expected_tag) {
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> rows >> cols) || tag != expected_tag || rows < 0 || cols < 0) {
    throw std::runtime_error("checkpoint: expected block '" + expected_tag + "'");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) {
        throw std::runtime_error("checkpoint: truncated block '" + expected_tag + "'");
      }
    }
  }
  return m;
}

void write_network(std::ostream& out, const std::string& prefix, const Network& net) {
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const std::string base = prefix + std::to_string(i);
    write_matrix(out, (base + ".weights").c_str(), net.layers[i].weights);
    write_matrix(out, (base + ".bias").c_str(), net.layers[i].bias);
  }
}

void read_network(std::istream& in, const std::string& prefix, Network& net) {
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const std::string base = prefix + std::to_string(i);
    net.layers[i].weights = read_matrix(in, base + ".weights");
    net.layers[i].bias = read_matrix(in, base + ".bias");
  }
}

Network make_stack(std::vector<Eigen::Index> sizes, double dropout, Rng& rng) {
  Network net;
  net.dropout_rate = dropout;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    net.layers.push_back(init_dense(sizes[i], sizes[i + 1], rng));
    net.activations.push_back(i + 2 < sizes.size() ? Activation::kRelu
                                                   : Activation::kIdentity);
  }
  return net;
}

}  // namespace

void EncoderDecoder::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.depth() != 3 || decoder.depth() != 3) {
    throw ShapeError("encoder and decoder must each have 3 layers");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& dec = decoder.layers[i];
    const auto& enc = encoder.layers[2 - i];
    if (dec.in_size() != enc.out_size() || dec.out_size() != enc.in_size()) {
      throw ShapeError("decoder layer " + std::to_string(i) +
                       " does not mirror encoder layer " + std::to_string(2 - i));
    }
  }
  if (centers.rows() != num_classes() || centers.cols() != feature_dim()) {
    throw ShapeError("centers are " + shape_str(centers) + ", expected " +
                     std::to_string(num_classes()) + "x" + std::to_string(feature_dim()));
  }
}

EncoderDecoder init_model(Eigen::Index input_dim, int num_classes, std::uint64_t seed,
                          Eigen::Index hidden, double dropout) {
  if (input_dim < 1) throw std::invalid_argument("init_model: input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("init_model: need at least 2 classes");
  if (hidden < 1) throw std::invalid_argument("init_model: hidden width must be >= 1");
  Rng rng(seed);
  EncoderDecoder model;
  model.encoder = make_stack({input_dim, hidden, hidden, num_classes}, dropout, rng);
  model.decoder = make_stack({num_classes, hidden, hidden, input_dim}, dropout, rng);
  model.centers = Matrix::Zero(num_classes, hidden);
  return model;
}

EncodeOutput encode(const EncoderDecoder& model, const Matrix& inputs, bool train_mode,
                    Rng* rng) {
  auto fwd = forward(model.encoder, inputs, train_mode, rng);
  EncodeOutput out;
  out.x_f = fwd.trace.post_activations[kFeatureTapLayer];
  out.logits = std::move(fwd.output);
  out.x_softmax = softmax_columns(out.logits);
  out.x_tanh = out.logits.array().tanh().matrix();
  out.trace = std::move(fwd.trace);
  return out;
}

Matrix decode(const EncoderDecoder& model, const Matrix& x_tanh, bool train_mode, Rng* rng) {
  return forward(model.decoder, x_tanh, train_mode, rng).output;
}

Prediction argmax_columns(const Matrix& probs) {
  Prediction p;
  p.labels.resize(static_cast<std::size_t>(probs.cols()));
  p.confidences.resize(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probs.rows(); ++k) {
      if (probs(k, j) > probs(best, j)) best = k;
    }
    p.labels[static_cast<std::size_t>(j)] = static_cast<ClassIndex>(best);
    p.confidences[static_cast<std::size_t>(j)] = probs(best, j);
  }
  return p;
}

Prediction predict_label(const EncoderDecoder& model, const Matrix& inputs) {
  if (inputs.cols() == 0) return {};
  return argmax_columns(encode(model, inputs, false).x_softmax);
}

void init_centers(EncoderDecoder& model, const Matrix& inputs,
                  std::span<const ClassIndex> labels) {
  model.centers.setZero(model.num_classes(), model.feature_dim());
  if (inputs.cols() == 0) return;
  const Matrix features = encode(model, inputs, false).x_f;
  std::vector<int> counts(static_cast<std::size_t>(model.num_classes()), 0);
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const auto k = labels[static_cast<std::size_t>(j)];
    if (k < 0) continue;
    model.centers.row(k) += features.col(j).transpose();
    ++counts[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < model.num_classes(); ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) {
      model.centers.row(k) /= counts[static_cast<std::size_t>(k)];
    }
  }
}

ObjectiveResult evaluate_objective(const EncoderDecoder& model, const Matrix& inputs,
                                   std::span<const ClassIndex> labels,
                                   const LossWeights& weights, bool train_mode, Rng* rng) {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) {
    throw ShapeError("evaluate_objective: label count does not match batch size");
  }
  std::vector<std::size_t> labeled, unlabeled;
  std::vector<ClassIndex> labeled_classes;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == kUnlabeled) {
      unlabeled.push_back(j);
    } else {
      labeled.push_back(j);
      labeled_classes.push_back(labels[j]);
    }
  }

  const EncodeOutput enc = encode(model, inputs, train_mode, rng);
  auto dec = forward(model.decoder, enc.x_tanh, train_mode, rng);

  ObjectiveResult result;
  Matrix logit_grad = Matrix::Zero(enc.logits.rows(), enc.logits.cols());
  Matrix feature_grad = Matrix::Zero(enc.x_f.rows(), enc.x_f.cols());
  result.center_delta = Matrix::Zero(model.centers.rows(), model.centers.cols());

  if (!labeled.empty()) {
    const auto ce = cross_entropy(gather_columns(enc.x_softmax, labeled), labeled_classes);
    const auto cl = center_loss(gather_columns(enc.x_f, labeled), labeled_classes,
                                model.centers);
    result.terms.ce = ce.value;
    result.terms.center = cl.value;
    result.center_delta = cl.center_delta;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      const auto j = static_cast<Eigen::Index>(labeled[i]);
      const auto col = static_cast<Eigen::Index>(i);
      logit_grad.col(j) += weights.alpha_ce * ce.gradient.col(col);
      feature_grad.col(j) = weights.alpha_c * cl.feature_gradient.col(col);
    }
  }
  if (!unlabeled.empty()) {
    const auto ent = entropy_regularization(gather_columns(enc.x_softmax, unlabeled));
    result.terms.entropy = ent.value;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
      logit_grad.col(static_cast<Eigen::Index>(unlabeled[i])) +=
          weights.alpha_ent * ent.gradient.col(static_cast<Eigen::Index>(i));
    }
  }
  const auto rec = reconstruction(inputs, dec.output);
  result.terms.reconstruction = rec.value;
  result.total = total_loss(result.terms, weights);

  result.decoder = backward(model.decoder, dec.trace, weights.alpha_r * rec.gradient);
  // tanh branch joins the softmax branch at the shared logits.
  logit_grad += (result.decoder.input.array() * (1.0 - enc.x_tanh.array().square())).matrix();
  const TapGradient tap{kFeatureTapLayer, std::move(feature_grad)};
  result.encoder = backward(model.encoder, enc.trace, logit_grad, std::span(&tap, 1));
  return result;
}

void apply_update(EncoderDecoder& model, const ObjectiveResult& result,
                  double learning_rate, double center_learning_rate) {
  sgd_step(model.encoder, result.encoder, learning_rate, "encoder");
  sgd_step(model.decoder, result.decoder, learning_rate, "decoder");
  sgd_step(model.centers, result.center_delta, center_learning_rate, "centers");
}

void save_checkpoint(const EncoderDecoder& model, std::ostream& out) {
  model.validate();
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "input_dim " << model.input_dim() << " classes " << model.num_classes()
      << " hidden " << model.feature_dim() << " dropout " << model.encoder.dropout_rate
      << '\n';
  write_network(out, "encoder", model.encoder);
  write_network(out, "decoder", model.decoder);
  write_matrix(out, "centers", model.centers);
  out.precision(old_precision);
}

EncoderDecoder load_checkpoint(std::istream& in) {
  std::string magic, key;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) {
    throw std::runtime_error("checkpoint: bad header");
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Eigen::Index input_dim = 0, hidden = 0;
  int classes = 0;
  double dropout = 0.0;
  std::string k1, k2, k3, k4;
  if (!(in >> k1 >> input_dim >> k2 >> classes >> k3 >> hidden >> k4 >> dropout) ||
      k1 != "input_dim" || k2 != "classes" || k3 != "hidden" || k4 != "dropout") {
    throw std::runtime_error("checkpoint: bad shape line");
  }
  EncoderDecoder model = init_model(input_dim, classes, 0, hidden, dropout);
  read_network(in, "encoder", model.encoder);
  read_network(in, "decoder", model.decoder);
  model.centers = read_matrix(in, "centers");
  model.validate();
  return model;
}

}  // namespace lpf
