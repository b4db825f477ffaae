#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "varinit/bn_reestimate.hpp"
#include "varinit/init.hpp"

using namespace varinit;

namespace {

Network dropout_dense_bn(double p, RandomSource& rng, Eigen::Index n_in = 32,
                         Eigen::Index n_out = 24) {
  Network net;
  net.add(std::make_unique<DropoutLayer>(p));
  auto dense = std::make_unique<DenseLayer>(n_in, n_out);
  dense->weights() = unit_hypersphere_matrix(rng, n_in, n_out);
  net.add(std::move(dense));
  net.add(std::make_unique<BatchNormLayer>(n_out));
  return net;
}

Dataset gaussian_feed(Eigen::Index n, Eigen::Index features,
                      std::uint64_t seed) {
  RandomSource rng(seed);
  Dataset ds;
  ds.classes = 2;
  ds.images = rng.normal_matrix(n, features);
  ds.labels.assign(static_cast<std::size_t>(n), 0);
  return ds;
}

}  // namespace

TEST_CASE("exact-mean re-estimation matches a two-pass variance oracle") {
  RandomSource rng(1);
  Network net = dropout_dense_bn(1.0, rng);
  Dataset feed = gaussian_feed(640, 32, 2);
  ReEstimateConfig cfg;
  cfg.batch_size = 64;
  REQUIRE(reestimate(net, feed, cfg));
  auto* bn = net.layers_of<BatchNormLayer>().front();
  auto* dense = dynamic_cast<DenseLayer*>(&net.layer(1));

  // Oracle: average the per-batch population variances of the dense output,
  // computed independently with a two-pass mean-then-variance sweep.
  RowVector expected = RowVector::Zero(24);
  int nb = 0;
  for (const Batch& b : batches(feed, 64, false, 0)) {
    Matrix z = (b.images * dense->weights()).rowwise() + dense->bias().row(0);
    for (Eigen::Index j = 0; j < 24; ++j) {
      double m = z.col(j).mean();
      expected(j) += (z.col(j).array() - m).square().mean();
    }
    ++nb;
  }
  expected /= nb;
  CHECK((bn->running_var().row(0).transpose() -
         expected.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("re-estimated variance shrinks by about the keep probability") {
  const double p = 0.6;
  RandomSource rng(3);
  Network net = dropout_dense_bn(p, rng, 64, 48);
  Dataset feed = gaussian_feed(12800, 64, 4);
  for (const Batch& b : batches(feed, 128, false, 0))
    net.forward(b.images, Mode::Train, &rng);
  auto* bn = net.layers_of<BatchNormLayer>().front();
  Matrix var_on = bn->running_var();
  ReEstimateConfig cfg;
  cfg.batch_size = 128;
  reestimate(net, feed, cfg);
  Matrix var_off = bn->running_var();
  long smaller = 0;
  for (Eigen::Index j = 0; j < 48; ++j) {
    CHECK(var_off(0, j) / var_on(0, j) == doctest::Approx(p).epsilon(0.20));
    if (var_off(0, j) < var_on(0, j)) ++smaller;
  }
  CHECK(static_cast<double>(smaller) / 48.0 >= 0.9);
}

TEST_CASE("only running_var changes") {
  RandomSource rng(5);
  Network net = dropout_dense_bn(0.7, rng);
  Dataset feed = gaussian_feed(256, 32, 6);
  for (const Batch& b : batches(feed, 64, false, 0))
    net.forward(b.images, Mode::Train, &rng);
  auto* bn = net.layers_of<BatchNormLayer>().front();
  std::vector<Matrix> params_before;
  for (Matrix* m : net.params()) params_before.push_back(*m);
  Matrix mean_before = bn->running_mean();
  ReEstimateConfig cfg;
  reestimate(net, feed, cfg);
  auto ps = net.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    CHECK(std::memcmp(ps[i]->data(), params_before[i].data(),
                      sizeof(double) * static_cast<std::size_t>(
                                           ps[i]->size())) == 0);
  CHECK(std::memcmp(bn->running_mean().data(), mean_before.data(),
                    sizeof(double) * 24) == 0);
}

TEST_CASE("ema estimator moves the variance the same direction") {
  RandomSource rng(7);
  Network net = dropout_dense_bn(0.5, rng);
  Dataset feed = gaussian_feed(1280, 32, 8);
  for (const Batch& b : batches(feed, 64, false, 0))
    net.forward(b.images, Mode::Train, &rng);
  auto* bn = net.layers_of<BatchNormLayer>().front();
  double before = bn->running_var().mean();
  ReEstimateConfig cfg;
  cfg.estimator = BnEstimator::Ema;
  cfg.epochs = 3;
  reestimate(net, feed, cfg);
  CHECK(bn->running_var().mean() < before);
}

TEST_CASE("network without batchnorm is a warned no-op") {
  Network net;
  net.add(std::make_unique<DenseLayer>(4, 2));
  Dataset feed = gaussian_feed(32, 4, 9);
  ReEstimateConfig cfg;
  CHECK(!reestimate(net, feed, cfg));
}

TEST_CASE("empty dataset is a data error") {
  RandomSource rng(10);
  Network net = dropout_dense_bn(0.7, rng);
  Dataset empty;
  empty.images.resize(0, 32);
  ReEstimateConfig cfg;
  CHECK_THROWS_AS(reestimate(net, empty, cfg), DataError);
}

TEST_CASE("evaluate basics") {
  // perfect classifier via a fixed logit table
  Network net;
  auto d = std::make_unique<DenseLayer>(2, 2);
  d->weights() = Matrix::Identity(2, 2) * 10.0;
  net.add(std::move(d));
  Dataset ds;
  ds.classes = 2;
  ds.images.resize(10, 2);
  ds.labels.resize(10);
  RandomSource rng(11);
  for (int i = 0; i < 10; ++i) {
    int y = i % 2;
    ds.labels[static_cast<std::size_t>(i)] = y;
    ds.images(i, 0) = y == 0 ? 1.0 : -1.0;
    ds.images(i, 1) = y == 1 ? 1.0 : -1.0;
  }
  EvalResult r = evaluate(net, ds);
  CHECK(r.error_rate == 0.0);
  EvalResult r2 = evaluate(net, ds);
  CHECK(r.loss == r2.loss);  // deterministic

  SUBCASE("near-uniform random logits give about 90% error on 10 classes") {
    Network noise;
    auto nd = std::make_unique<DenseLayer>(1, 10);
    nd->weights() = rng.normal_matrix(1, 10) * 1e-6;
    noise.add(std::move(nd));
    Dataset big;
    big.classes = 10;
    big.images = rng.normal_matrix(20000, 1);
    big.labels.resize(20000);
    for (std::size_t i = 0; i < 20000; ++i)
      big.labels[i] = static_cast<int>(rng.index(10));
    EvalResult rr = evaluate(noise, big);
    CHECK(rr.error_rate == doctest::Approx(0.9).epsilon(0.02));
  }
}
