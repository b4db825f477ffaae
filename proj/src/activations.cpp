#include "varinit/activations.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace varinit {

ActivationKind ActivationKind::elu(double alpha) {
  if (alpha <= 0.0) throw InvalidSpecError("ELU alpha must be positive");
  ActivationKind k{Tag::ELU};
  k.alpha = alpha;
  return k;
}

ActivationKind ActivationKind::gelu(double mu, double sigma) {
  if (sigma <= 0.0) throw InvalidSpecError("GELU sigma must be positive");
  ActivationKind k{Tag::GELU};
  k.mu = mu;
  k.sigma = sigma;
  return k;
}

std::string ActivationKind::name() const {
  switch (tag) {
    case Tag::Identity: return "identity";
    case Tag::ReLU: return "relu";
    case Tag::Tanh: return "tanh";
    case Tag::ELU: return "elu";
    case Tag::GELU: return "gelu";
  }
  return "?";
}

ActivationKind parse_activation(const std::string& name) {
  if (name == "identity") return ActivationKind::identity();
  if (name == "relu") return ActivationKind::relu();
  if (name == "tanh") return ActivationKind::tanh();
  if (name == "elu") return ActivationKind::elu();
  if (name == "gelu") return ActivationKind::gelu();
  throw InvalidSpecError("unknown activation: " + name);
}

double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_cdf(double x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  return 0.5 * std::erfc(-x * inv_sqrt2);
}

double apply_scalar(const ActivationKind& f, double x) {
  switch (f.tag) {
    case ActivationKind::Tag::Identity: return x;
    case ActivationKind::Tag::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Tag::Tanh: return std::tanh(x);
    case ActivationKind::Tag::ELU:
      return x > 0.0 ? x : f.alpha * std::expm1(x);
    case ActivationKind::Tag::GELU:
      return x * normal_cdf((x - f.mu) / f.sigma);
  }
  return x;
}

double derivative_scalar(const ActivationKind& f, double x) {
  switch (f.tag) {
    case ActivationKind::Tag::Identity: return 1.0;
    case ActivationKind::Tag::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Tag::Tanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::Tag::ELU:
      return x > 0.0 ? 1.0 : f.alpha * std::exp(x);
    case ActivationKind::Tag::GELU: {
      double u = (x - f.mu) / f.sigma;
      return normal_cdf(u) + x * normal_pdf(u) / f.sigma;
    }
  }
  return 1.0;
}

Matrix apply(const ActivationKind& f, const Matrix& x) {
  return x.unaryExpr([&f](double v) { return apply_scalar(f, v); });
}

Matrix derivative(const ActivationKind& f, const Matrix& x) {
  return x.unaryExpr([&f](double v) { return derivative_scalar(f, v); });
}

namespace quadrature {

Rule gauss_hermite(int n) {
  if (n < 1) throw InvalidSpecError("gauss_hermite: need at least one node");
  // The eigendecomposition is O(n^3); memoize per node count.
  static std::mutex mutex;
  static std::map<int, Rule> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
  }
  // Jacobi matrix of the (physicists') Hermite polynomials: zero diagonal,
  // off-diagonal sqrt(k/2).
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
  Rule r;
  r.nodes = solver.eigenvalues();
  r.weights.resize(n);
  constexpr double sqrt_pi = 1.7724538509055160273;
  for (int i = 0; i < n; ++i) {
    double v0 = solver.eigenvectors()(0, i);
    r.weights(i) = sqrt_pi * v0 * v0;
  }
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(n, std::move(r)).first->second;
}

}  // namespace quadrature

namespace {

// 1024 nodes: Gauss-Hermite converges slowly (~n^-3/2) for integrands with a
// kink, such as the squared ELU derivative at zero; this node count keeps the
// worst-case error near 1e-4. The rule is built once and the resulting
// factors are cached, so the cost is paid once per activation.
constexpr int kQuadratureNodes = 1024;
constexpr std::size_t kMonteCarloSamples = 10'000'000;
constexpr std::uint64_t kMonteCarloSeed = 0x5eed'fac7'0125ULL;

AdjustmentFactors compute_quadrature(const ActivationKind& f) {
  AdjustmentFactors out;
  out.forward = quadrature::gaussian_expectation(
      [&f](double z) { double v = apply_scalar(f, z); return v * v; },
      kQuadratureNodes);
  out.backward = quadrature::gaussian_expectation(
      [&f](double z) { double v = derivative_scalar(f, z); return v * v; },
      kQuadratureNodes);
  out.source = FactorMethod::Quadrature;
  return out;
}

AdjustmentFactors compute_monte_carlo(const ActivationKind& f) {
  RandomSource rng(kMonteCarloSeed);
  double sf = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < kMonteCarloSamples; ++i) {
    double z = rng.normal();
    double a = apply_scalar(f, z);
    double d = derivative_scalar(f, z);
    sf += a * a;
    sb += d * d;
  }
  AdjustmentFactors out;
  out.forward = sf / static_cast<double>(kMonteCarloSamples);
  out.backward = sb / static_cast<double>(kMonteCarloSamples);
  out.source = FactorMethod::MonteCarlo;
  return out;
}

AdjustmentFactors compute(const ActivationKind& f, FactorMethod method) {
  switch (method) {
    case FactorMethod::Analytic:
      if (f.tag == ActivationKind::Tag::Identity)
        return {1.0, 1.0, FactorMethod::Analytic};
      if (f.tag == ActivationKind::Tag::ReLU)
        // E[relu(z)^2] = E[z^2]/2 by symmetry; likewise E[relu'(z)^2] = 1/2.
        return {0.5, 0.5, FactorMethod::Analytic};
      // No closed form; fall back and flag it.
      return compute_quadrature(f);
    case FactorMethod::Quadrature:
      return compute_quadrature(f);
    case FactorMethod::MonteCarlo:
      return compute_monte_carlo(f);
  }
  throw InvalidSpecError("unknown factor method");
}

}  // namespace

AdjustmentFactors adjustment_factors(const ActivationKind& f,
                                     FactorMethod method) {
  using Key = std::tuple<int, double, double, double, int>;
  static std::map<Key, AdjustmentFactors> cache;
  static std::mutex cache_mutex;
  Key key{static_cast<int>(f.tag), f.alpha, f.mu, f.sigma,
          static_cast<int>(method)};
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  AdjustmentFactors out = compute(f, method);
  std::lock_guard<std::mutex> lock(cache_mutex);
  cache.emplace(key, out);
  return out;
}

AdjustmentFactors default_adjustment_factors() {
  return {0.5, 0.5, FactorMethod::Analytic};
}

}  // namespace varinit
