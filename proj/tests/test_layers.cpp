#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "varinit/bench.hpp"
#include "varinit/checkpoint.hpp"
#include "varinit/layers.hpp"

using namespace varinit;

TEST_CASE("dropout p=1 is the identity in every mode") {
  DropoutLayer d(1.0);
  RandomSource rng(1);
  Matrix x = rng.normal_matrix(4, 6);
  for (Mode m : {Mode::Train, Mode::Eval, Mode::ReEstimate})
    CHECK((d.forward(x, m, &rng) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inverted dropout expectation matches the input") {
  DropoutLayer d(0.5);
  RandomSource rng(2);
  Matrix x = Matrix::Constant(1, 8, 3.0);
  Matrix acc = Matrix::Zero(1, 8);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) acc += d.forward(x, Mode::Train, &rng);
  acc /= trials;
  CHECK((acc - x).cwiseAbs().maxCoeff() / 3.0 < 0.02);
}

TEST_CASE("dropout eval passes through and train needs an rng") {
  DropoutLayer d(0.5);
  RandomSource rng(3);
  Matrix x = rng.normal_matrix(3, 3);
  CHECK((d.forward(x, Mode::Eval, nullptr) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(d.forward(x, Mode::Train, nullptr), ContractError);
}

TEST_CASE("batchnorm train output is standardized before gamma/beta") {
  // Tiny epsilon so the 1e-6 variance band is not eaten by the stabilizer
  // (variance of the output is sigma^2 / (sigma^2 + eps)).
  BatchNormLayer bn(5, 0, 0.9, 1e-12);
  RandomSource rng(4);
  Matrix x = rng.normal_matrix(256, 5) * 3.0;
  x.array() += 7.0;
  Matrix y = bn.forward(x, Mode::Train, nullptr);
  for (Eigen::Index j = 0; j < 5; ++j) {
    CHECK(std::abs(y.col(j).mean()) < 1e-8);
    double var = (y.col(j).array() - y.col(j).mean()).square().mean();
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("batchnorm eval is deterministic and batch independent") {
  BatchNormLayer bn(3);
  RandomSource rng(5);
  for (int i = 0; i < 10; ++i)
    bn.forward(rng.normal_matrix(64, 3), Mode::Train, nullptr);
  Matrix probe = rng.normal_matrix(4, 3);
  Matrix y1 = bn.forward(probe, Mode::Eval, nullptr);
  // same rows inside a different batch
  Matrix padded(8, 3);
  padded.topRows(4) = probe;
  padded.bottomRows(4) = rng.normal_matrix(4, 3);
  Matrix y2 = bn.forward(padded, Mode::Eval, nullptr).topRows(4);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax cross entropy basics") {
  SUBCASE("uniform logits give ln K") {
    Matrix logits = Matrix::Zero(2, 10);
    LossResult r = softmax_cross_entropy(logits, {0, 3});
    CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("huge margin is stable") {
    Matrix logits(1, 2);
    logits << 1e6, 0.0;
    LossResult r = softmax_cross_entropy(logits, {0});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss < 1e-12);
  }
  SUBCASE("matches a long-double oracle") {
    RandomSource rng(6);
    Matrix logits = rng.normal_matrix(5, 7) * 4.0;
    std::vector<int> labels{0, 1, 2, 3, 4};
    LossResult r = softmax_cross_entropy(logits, labels);
    long double acc = 0.0L;
    for (int n = 0; n < 5; ++n) {
      long double z = 0.0L;
      for (int k = 0; k < 7; ++k) z += expl((long double)logits(n, k));
      acc += logl(z) - (long double)logits(n, labels[(std::size_t)n]);
    }
    CHECK(std::abs(r.loss - (double)(acc / 5.0L)) < 1e-10);
  }
  SUBCASE("label out of range") {
    Matrix logits = Matrix::Zero(1, 3);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {5}), DataError);
  }
}

TEST_CASE("finite-difference gradients on a two-layer net") {
  RandomSource rng(7);
  Network net;
  auto d1 = std::make_unique<DenseLayer>(4, 6);
  d1->weights() = rng.normal_matrix(4, 6) * 0.7;
  d1->bias() = rng.normal_matrix(1, 6) * 0.2;
  net.add(std::move(d1));
  net.add(std::make_unique<ActivationLayer>(ActivationKind::tanh()));
  auto d2 = std::make_unique<DenseLayer>(6, 3);
  d2->weights() = rng.normal_matrix(6, 3) * 0.7;
  net.add(std::move(d2));
  Matrix x = rng.normal_matrix(8, 4);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  CHECK(gradient_check(net, x, labels, 11) < 1e-4);
}

TEST_CASE("gradient vanishes at a saturated optimum") {
  Network net;
  auto d = std::make_unique<DenseLayer>(2, 2);
  d->weights() = Matrix::Identity(2, 2) * 100.0;
  net.add(std::move(d));
  Matrix x(1, 2);
  x << 1.0, -1.0;  // logits (100, -100), label 0
  net.forward(x, Mode::Train, nullptr);
  LossResult r = softmax_cross_entropy(Matrix(x * 100.0), {0});
  net.backward(r.dlogits);
  double norm = 0.0;
  for (Matrix* g : net.grads()) norm += g->squaredNorm();
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("fully masked unit gets zero weight gradients") {
  RandomSource rng(8);
  Network net;
  net.add(std::make_unique<DropoutLayer>(0.3));
  auto d = std::make_unique<DenseLayer>(10, 3);
  d->weights() = rng.normal_matrix(10, 3);
  net.add(std::move(d));
  Matrix x = rng.normal_matrix(4, 10);
  Matrix logits = net.forward(x, Mode::Train, &rng);
  net.backward(softmax_cross_entropy(logits, {0, 1, 2, 0}).dlogits);
  const auto* drop = dynamic_cast<const DropoutLayer*>(&net.layer(0));
  auto* dense = dynamic_cast<DenseLayer*>(&net.layer(1));
  const Matrix& dw = *dense->grads()[0];
  bool found = false;
  for (Eigen::Index j = 0; j < 10; ++j) {
    if (drop->mask().col(j).cwiseAbs().maxCoeff() == 0.0) {
      found = true;
      CHECK(dw.row(j).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(found);  // with p=0.3 and 4 rows some column is fully masked
}

TEST_CASE("conv forward matches a naive six-loop oracle") {
  RandomSource rng(9);
  const int H = 5, W = 5, CI = 2, CO = 3, K = 3, S = 1, P = 1;
  Conv2dLayer conv(H, W, CI, CO, K, K, S, P);
  conv.filters() = rng.normal_matrix(conv.fan_in(), CO);
  conv.bias() = rng.normal_matrix(1, CO);
  Matrix x = rng.normal_matrix(2, H * W * CI);
  Matrix y = conv.forward(x, Mode::Eval, nullptr);

  const int OH = conv.out_h(), OW = conv.out_w();
  for (Eigen::Index n = 0; n < 2; ++n)
    for (int oi = 0; oi < OH; ++oi)
      for (int oj = 0; oj < OW; ++oj)
        for (int co = 0; co < CO; ++co) {
          double acc = conv.bias()(0, co);
          for (int ki = 0; ki < K; ++ki)
            for (int kj = 0; kj < K; ++kj)
              for (int ci = 0; ci < CI; ++ci) {
                int si = oi * S + ki - P, sj = oj * S + kj - P;
                if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                acc += x(n, (si * W + sj) * CI + ci) *
                       conv.filters()((ki * K + kj) * CI + ci, co);
              }
          CHECK(std::abs(y(n, (oi * OW + oj) * CO + co) - acc) < 1e-10);
        }
}

TEST_CASE("backward without a train forward is a contract violation") {
  RandomSource rng(10);
  DenseLayer d(3, 2);
  d.weights() = rng.normal_matrix(3, 2);
  Matrix x = rng.normal_matrix(2, 3);
  d.forward(x, Mode::Eval, nullptr);
  CHECK_THROWS_AS(d.backward(Matrix::Zero(2, 2)), ContractError);
}

TEST_CASE("checkpoint round trip is lossless") {
  RandomSource rng(11);
  Network net;
  auto d = std::make_unique<DenseLayer>(6, 4);
  d->weights() = rng.normal_matrix(6, 4);
  d->bias() = rng.normal_matrix(1, 4);
  net.add(std::move(d));
  net.add(std::make_unique<BatchNormLayer>(4));
  net.add(std::make_unique<ActivationLayer>(ActivationKind::elu(1.0)));
  net.add(std::make_unique<DropoutLayer>(0.7));
  auto d2 = std::make_unique<DenseLayer>(4, 2);
  d2->weights() = rng.normal_matrix(4, 2);
  net.add(std::move(d2));
  for (int i = 0; i < 3; ++i)
    net.forward(rng.normal_matrix(16, 6), Mode::Train, &rng);

  std::stringstream buf;
  write_network(net, buf);
  Network copy = read_network(buf);
  auto p1 = net.params();
  auto p2 = copy.params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK((*p1[i] - *p2[i]).cwiseAbs().maxCoeff() == 0.0);
  Matrix probe = rng.normal_matrix(5, 6);
  CHECK((net.forward(probe, Mode::Eval, nullptr) -
         copy.forward(probe, Mode::Eval, nullptr))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}
