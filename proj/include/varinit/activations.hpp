#pragma once

#include <string>

#include "varinit/core.hpp"

namespace varinit {

/// Nonlinearity identity plus parameters where the family has any.
struct ActivationKind {
  enum class Tag { Identity, ReLU, Tanh, ELU, GELU };

  Tag tag = Tag::Identity;
  double alpha = 1.0;  // ELU
  double mu = 0.0;     // GELU
  double sigma = 1.0;  // GELU

  static ActivationKind identity() { return {Tag::Identity}; }
  static ActivationKind relu() { return {Tag::ReLU}; }
  static ActivationKind tanh() { return {Tag::Tanh}; }
  static ActivationKind elu(double alpha = 1.0);
  static ActivationKind gelu(double mu = 0.0, double sigma = 1.0);

  std::string name() const;
};

/// Parse "identity", "relu", "tanh", "elu", "gelu" (default parameters).
ActivationKind parse_activation(const std::string& name);

double apply_scalar(const ActivationKind& f, double x);
double derivative_scalar(const ActivationKind& f, double x);

Matrix apply(const ActivationKind& f, const Matrix& x);
/// Elementwise f'(x). ReLU'(0) is defined as 0 (left limit); ELU' at 0 uses
/// the right limit 1 so the derivative is continuous for alpha=1.
Matrix derivative(const ActivationKind& f, const Matrix& x);

enum class FactorMethod { Analytic, Quadrature, MonteCarlo };

/// The corrective moments E[f(z)^2] and E[f'(z)^2] for z ~ N(0,1).
struct AdjustmentFactors {
  double forward = 1.0;
  double backward = 1.0;
  FactorMethod source = FactorMethod::Analytic;
};

/// Compute (E[f(z)^2], E[f'(z)^2]). Analytic requests without a closed form
/// fall back to quadrature and flag it in `source`. Results are cached per
/// (activation, method); the integrals never rerun per layer.
AdjustmentFactors adjustment_factors(const ActivationKind& f,
                                     FactorMethod method = FactorMethod::Quadrature);

/// Default moments for activations without a table entry: (0.5, 0.5).
AdjustmentFactors default_adjustment_factors();

/// Standard normal CDF via std::erf (accurate to ~1e-15).
double normal_cdf(double x);
double normal_pdf(double x);

namespace quadrature {
/// Gauss-Hermite nodes/weights for weight exp(-x^2), via Golub-Welsch on the
/// Jacobi matrix with Eigen's self-adjoint eigensolver.
struct Rule {
  Vector nodes;
  Vector weights;
};
Rule gauss_hermite(int n);

/// E[g(z)] for z ~ N(0,1) using an n-node Gauss-Hermite rule.
template <typename G>
double gaussian_expectation(const G& g, int n = 128) {
  Rule r = gauss_hermite(n);
  constexpr double inv_sqrt_pi = 0.5641895835477562869;
  double acc = 0.0;
  const double sqrt2 = 1.4142135623730950488;
  for (Eigen::Index i = 0; i < r.nodes.size(); ++i)
    acc += r.weights(i) * g(sqrt2 * r.nodes(i));
  return acc * inv_sqrt_pi;
}
}  // namespace quadrature

}  // namespace varinit
