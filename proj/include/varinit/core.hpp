#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace varinit {

// All numerics are fp64. Matrices are batch-major: rows index examples,
// columns index features.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidSpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Seeded random source. The generator is mt19937_64 (fully specified by the
/// C++ standard) and normal deviates come from a hand-rolled Box-Muller
/// transform, so identical seeds give identical streams on every platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1). 53-bit mantissa from the top bits of the engine.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // size_t in [0, n)
  std::size_t index(std::size_t n);

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Vector normal_vector(Eigen::Index n);

  /// Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Checked matrix product. Eigen's GEMM has a fixed summation order in a
/// single-threaded build, so results are deterministic.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree (" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  return a * b;
}

/// Population variance (divide by N) of all entries.
double variance(const Matrix& x);

/// Population variance along an axis: axis 0 reduces over rows (per-column
/// result), axis 1 reduces over columns (per-row result).
Vector variance(const Matrix& x, int axis);

double mean(const Matrix& x);

inline void require_finite(const Matrix& x, const std::string& what) {
  if (!x.allFinite()) throw ContractError(what + ": non-finite entries");
}

}  // namespace varinit
