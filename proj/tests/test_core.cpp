#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "varinit/core.hpp"

using namespace varinit;

namespace {

// Independent oracle: naive triple-loop product.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k)
        c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace

TEST_CASE("matmul identity") {
  RandomSource rng(1);
  Matrix x = rng.normal_matrix(3, 5);
  Matrix i3 = Matrix::Identity(3, 3);
  CHECK((matmul(i3, x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("matmul hand arithmetic") {
  Matrix a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 1, 1;
  Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 3.0);
  CHECK(c(1, 0) == 7.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  RandomSource rng(2);
  Matrix a = rng.normal_matrix(8, 8);
  Matrix b = rng.normal_matrix(8, 8);
  CHECK((matmul(a, b) - matmul_oracle(a, b)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matmul oracle property over random dims 2..16") {
  RandomSource rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto dim = [&] { return 2 + static_cast<Eigen::Index>(rng.index(15)); };
    Eigen::Index m = dim(), k = dim(), n = dim();
    Matrix a = rng.normal_matrix(m, k);
    Matrix b = rng.normal_matrix(k, n);
    Matrix got = matmul(a, b);
    Matrix want = matmul_oracle(a, b);
    double denom = want.cwiseAbs().maxCoeff() + 1e-30;
    CHECK((got - want).cwiseAbs().maxCoeff() / denom < 1e-10);
  }
}

TEST_CASE("matmul shape error") {
  Matrix a(2, 3), b(2, 2);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("standard normal sample moments") {
  RandomSource rng(42);
  Matrix x = rng.normal_matrix(1000, 1000);
  CHECK(std::abs(mean(x)) < 0.01);
  CHECK(std::abs(variance(x) - 1.0) < 0.01);
}

TEST_CASE("same seed gives identical streams") {
  RandomSource a(7), b(7);
  Matrix ma = a.normal_matrix(10, 10);
  Matrix mb = b.normal_matrix(10, 10);
  CHECK((ma - mb).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.uniform() == b.uniform());
  auto pa = a.permutation(100);
  auto pb = b.permutation(100);
  CHECK(pa == pb);
}

TEST_CASE("variance of constant tensor is zero") {
  Matrix x = Matrix::Constant(4, 4, 3.5);
  CHECK(variance(x) == 0.0);
}

TEST_CASE("population variance hand arithmetic") {
  Matrix x(1, 4);
  x << 1, 2, 3, 4;
  CHECK(variance(x) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("variance of scaled gaussian sample") {
  RandomSource rng(5);
  double sigma = 2.5;
  Matrix x = rng.normal_matrix(1000, 1000) * sigma;
  CHECK(variance(x) == doctest::Approx(sigma * sigma).epsilon(0.01));
}

TEST_CASE("variance along axes") {
  Matrix x(2, 3);
  x << 1, 2, 3, 3, 2, 1;
  Vector v0 = variance(x, 0);
  CHECK(v0(0) == doctest::Approx(1.0));
  CHECK(v0(1) == doctest::Approx(0.0));
  Vector v1 = variance(x, 1);
  CHECK(v1(0) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(variance(x, 2), ShapeError);
}
