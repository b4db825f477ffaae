#include "varinit/core.hpp"

#include <cmath>
#include <numbers>

namespace varinit {

double RandomSource::normal() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  // Box-Muller. uniform() can return exactly 0; shift into (0, 1].
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::size_t RandomSource::index(std::size_t n) {
  // Rejection sampling keeps the draw unbiased for any n.
  std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= bound);
  return static_cast<std::size_t>(v % n);
}

Matrix RandomSource::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // Row-major fill so the stream order matches the documented layout.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
  return m;
}

Vector RandomSource::normal_vector(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

std::vector<std::size_t> RandomSource::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = index(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

double mean(const Matrix& x) { return x.mean(); }

double variance(const Matrix& x) {
  double m = x.mean();
  return (x.array() - m).square().mean();
}

Vector variance(const Matrix& x, int axis) {
  if (axis == 0) {
    RowVector m = x.colwise().mean();
    return ((x.rowwise() - m).array().square().colwise().mean())
        .matrix()
        .transpose();
  }
  if (axis == 1) {
    Vector m = x.rowwise().mean();
    return (x.colwise() - m).array().square().rowwise().mean();
  }
  throw ShapeError("variance: axis out of range: " + std::to_string(axis));
}

}  // namespace varinit
