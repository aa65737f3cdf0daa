#include <doctest.h>

#include <cmath>

#include "lpf/nn_core.hpp"

using namespace lpf;

namespace {

Network two_layer() {
  Network net;
  DenseLayer a(3, 2);
  a.weights << 0.1, 0.2, -0.3, 0.4, -0.5, 0.6;
  a.bias << 0.1, -0.1;
  DenseLayer b(2, 2);
  b.weights << 1.0, -1.0, 0.5, 0.25;
  b.bias << 0.0, 0.2;
  net.layers = {a, b};
  net.activations = {Activation::kRelu, Activation::kIdentity};
  return net;
}

Network random_net(std::uint64_t seed, double dropout) {
  Rng rng(seed);
  Network net;
  net.layers = {init_dense(5, 7, rng), init_dense(7, 7, rng), init_dense(7, 3, rng)};
  net.activations = {Activation::kRelu, Activation::kRelu, Activation::kIdentity};
  net.dropout_rate = dropout;
  return net;
}

Matrix random_input(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("forward matches a hand-computed two-layer chain") {
  Matrix x(3, 1);
  x << 1.0, 2.0, 3.0;
  const auto out = forward(two_layer(), x, false, nullptr).output;
  CHECK(out(0, 0) == doctest::Approx(-1.1).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(0.475).epsilon(1e-12));
}

TEST_CASE("glorot init stays inside its bound and zeroes the bias") {
  Rng rng(4);
  const auto layer = init_dense(30, 20, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  CHECK(layer.weights.rows() == 20);
  CHECK(layer.weights.cols() == 30);
  CHECK(layer.weights.cwiseAbs().maxCoeff() <= limit);
  CHECK(layer.weights.cwiseAbs().maxCoeff() > 0.8 * limit);
  CHECK(layer.bias.isZero());
}

TEST_CASE("validate names the layer whose sizes do not chain") {
  Network net = random_net(1, 0.0);
  net.validate();
  net.layers[2] = DenseLayer(6, 3);
  CHECK_THROWS_WITH_AS(net.validate(), doctest::Contains("layer 2"), ShapeError);
}

TEST_CASE("softmax columns are distributions and survive huge logits") {
  Matrix logits(3, 2);
  logits << 1.0, -2.0, 2.0, 0.0, 3.0, 1000.0;
  const Matrix p = softmax_columns(logits);
  CHECK(p.allFinite());
  CHECK(p(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(p(1, 0) == doctest::Approx(0.24472847105479764).epsilon(1e-14));
  CHECK(p(2, 0) == doctest::Approx(0.6652409557748218).epsilon(1e-14));
  CHECK(p(2, 1) == 1.0);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.col(j).minCoeff() >= 0.0);
  }
}

TEST_CASE("dropout is a no-op in eval mode") {
  const Network net = random_net(2, 0.5);
  const Matrix x = random_input(5, 9, 3);
  Rng rng(7);
  const Matrix a = forward(net, x, false, &rng).output;
  const Matrix b = forward(net, x, false, nullptr).output;
  CHECK(a == b);
}

TEST_CASE("dropout masks are zero or 1/(1-p) and preserve the mean") {
  const Network net = random_net(2, 0.3);
  const Matrix x = random_input(5, 4000, 5);
  Rng rng(11);
  const auto res = forward(net, x, true, &rng);
  const Matrix& mask = res.trace.dropout_masks[0];
  REQUIRE(mask.size() == 7 * 4000);
  const double keep = 1.0 / 0.7;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double v = mask.data()[i];
    CHECK((v == 0.0 || std::abs(v - keep) < 1e-15));
  }
  CHECK(mask.mean() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(res.trace.dropout_masks.back().size() == 0);
}

TEST_CASE("replay reproduces a train-mode forward pass") {
  const Network net = random_net(3, 0.3);
  const Matrix x = random_input(5, 6, 8);
  Rng rng(12);
  const auto res = forward(net, x, true, &rng);
  CHECK(replay(net, res.trace) == res.output);
}

TEST_CASE("same seed gives identical forward passes") {
  const Network net = random_net(3, 0.3);
  const Matrix x = random_input(5, 6, 8);
  Rng r1(5), r2(5);
  CHECK(forward(net, x, true, &r1).output == forward(net, x, true, &r2).output);
}

TEST_CASE("backward matches central differences, including a tap") {
  const Network net = random_net(6, 0.0);
  const Matrix x = random_input(5, 4, 9);
  const Matrix target = random_input(3, 4, 10);
  const Matrix tap_weight = random_input(7, 4, 11);

  // loss = 0.5 ||out - target||^2 + <tap_weight, post_activation of layer 1>
  auto loss = [&](const Network& n) {
    const auto r = forward(n, x, false, nullptr);
    return 0.5 * (r.output - target).squaredNorm() +
           tap_weight.cwiseProduct(r.trace.post_activations[1]).sum();
  };
  const auto res = forward(net, x, false, nullptr);
  const TapGradient tap{1, tap_weight};
  const auto grads = backward(net, res.trace, res.output - target, std::span(&tap, 1));

  Network probe = net;
  const double h = 1e-6;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (Eigen::Index i = 0; i < net.layers[l].weights.size(); ++i) {
      double& p = probe.layers[l].weights.data()[i];
      const double s = p;
      p = s + h;
      const double up = loss(probe);
      p = s - h;
      const double down = loss(probe);
      p = s;
      CHECK(grads.layers[l].weights.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
    for (Eigen::Index i = 0; i < net.layers[l].bias.size(); ++i) {
      double& p = probe.layers[l].bias(i);
      const double s = p;
      p = s + h;
      const double up = loss(probe);
      p = s - h;
      const double down = loss(probe);
      p = s;
      CHECK(grads.layers[l].bias(i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("backward rejects mis-shaped gradients") {
  const Network net = random_net(6, 0.0);
  const auto res = forward(net, random_input(5, 4, 1), false, nullptr);
  CHECK_THROWS_AS(backward(net, res.trace, Matrix::Zero(3, 5)), ShapeError);
  const TapGradient bad{1, Matrix::Zero(6, 4)};
  CHECK_THROWS_AS(backward(net, res.trace, Matrix::Zero(3, 4), std::span(&bad, 1)), ShapeError);
}

TEST_CASE("sgd_step moves against the gradient") {
  Matrix p(1, 2);
  p << 1.0, -1.0;
  Matrix g(1, 2);
  g << 0.5, -2.0;
  sgd_step(p, g, 0.1, "p");
  CHECK(p(0, 0) == doctest::Approx(0.95));
  CHECK(p(0, 1) == doctest::Approx(-0.8));
}

TEST_CASE("non-finite gradients are rejected and leave parameters untouched") {
  Network net = random_net(6, 0.0);
  const Network before = net;
  const auto res = forward(net, random_input(5, 2, 1), false, nullptr);
  auto grads = backward(net, res.trace, Matrix::Ones(3, 2));
  grads.layers[1].bias(0) = std::nan("");
  CHECK_THROWS_WITH_AS(sgd_step(net, grads, 0.1, "encoder"),
                       doctest::Contains("encoder.layer1.bias"), NumericError);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    CHECK(net.layers[l].weights == before.layers[l].weights);
    CHECK(net.layers[l].bias == before.layers[l].bias);
  }
}

TEST_CASE("sgd config validation") {
  SgdConfig c;
  c.validate();
  c.learning_rate = 0.0;
  CHECK_THROWS(c.validate());
  c = SgdConfig{};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
}
