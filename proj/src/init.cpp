#include "varinit/init.hpp"

#include <cmath>

namespace varinit {

namespace {

bool baseline_base(InitBase b) {
  return b == InitBase::GaussianHe || b == InitBase::GaussianXavier;
}

}  // namespace

void InitializerSpec::validate() const {
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw InvalidSpecError("keep_prob must be in (0, 1]");
  if (correction == InitCorrection::None && !baseline_base(base))
    throw InvalidSpecError(
        "correction=None is only valid with the he/xavier baselines");
  if (correction == InitCorrection::GeneralizedXavier &&
      base != InitBase::UniformHypercube)
    throw InvalidSpecError(
        "generalized_xavier applies to the uniform hypercube base");
}

InitializerSpec named_initializer(const std::string& name) {
  InitializerSpec s;
  if (name == "hypersphere_fwd") {
    s.base = InitBase::Hypersphere;
    s.correction = InitCorrection::Forward;
  } else if (name == "hypersphere_bwd") {
    s.base = InitBase::Hypersphere;
    s.correction = InitCorrection::Backward;
  } else if (name == "hypersphere_fwdbwd") {
    s.base = InitBase::Hypersphere;
    s.correction = InitCorrection::ForwardBackward;
  } else if (name == "orthonormal_fwdbwd") {
    s.base = InitBase::Orthonormal;
    s.correction = InitCorrection::ForwardBackward;
  } else if (name == "xavier") {
    s.base = InitBase::GaussianXavier;
    s.correction = InitCorrection::None;
  } else if (name == "he") {
    s.base = InitBase::GaussianHe;
    s.correction = InitCorrection::None;
  } else if (name == "generalized_xavier") {
    s.base = InitBase::UniformHypercube;
    s.correction = InitCorrection::GeneralizedXavier;
  } else {
    throw InvalidSpecError("unknown initializer: " + name);
  }
  return s;
}

std::string initializer_name(const InitializerSpec& spec) {
  switch (spec.base) {
    case InitBase::GaussianHe: return "he";
    case InitBase::GaussianXavier: return "xavier";
    case InitBase::UniformHypercube: return "generalized_xavier";
    case InitBase::Orthonormal: return "orthonormal_fwdbwd";
    case InitBase::Hypersphere:
      switch (spec.correction) {
        case InitCorrection::Forward: return "hypersphere_fwd";
        case InitCorrection::Backward: return "hypersphere_bwd";
        default: return "hypersphere_fwdbwd";
      }
  }
  return "?";
}

Matrix unit_hypersphere_matrix(RandomSource& rng, Eigen::Index n_in,
                               Eigen::Index n_out) {
  if (n_in < 1 || n_out < 1)
    throw ShapeError("unit_hypersphere_matrix: dimensions must be positive");
  Matrix w(n_in, n_out);
  for (Eigen::Index j = 0; j < n_out; ++j) {
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < n_in; ++i) w(i, j) = rng.normal();
      norm = w.col(j).norm();
    } while (norm == 0.0);
    w.col(j) /= norm;
  }
  return w;
}

Matrix orthonormal_matrix(RandomSource& rng, Eigen::Index n) {
  if (n < 1) throw ShapeError("orthonormal_matrix: n must be positive");
  Matrix a = rng.normal_matrix(n, n);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

double corrective_scale(const InitializerSpec& spec, Eigen::Index n_in,
                        Eigen::Index n_out) {
  spec.validate();
  const double p = spec.keep_prob;
  const double fwd =
      adjustment_factors(spec.activation_in, spec.factor_method).forward;
  const double bwd =
      adjustment_factors(spec.activation_out, spec.factor_method).backward;
  double denom = 0.0;
  switch (spec.correction) {
    case InitCorrection::None:
      return 1.0;
    case InitCorrection::Forward:
      denom = fwd / p;
      break;
    case InitCorrection::Backward:
      denom = p * bwd;
      break;
    case InitCorrection::ForwardBackward:
      denom = fwd / p + p * bwd;
      break;
    case InitCorrection::GeneralizedXavier:
      denom = (static_cast<double>(n_in) / p) * fwd +
              p * static_cast<double>(n_out) * bwd;
      return std::sqrt(3.0) / std::sqrt(denom);
  }
  if (denom <= 0.0)
    throw InvalidSpecError("corrective_scale: zero variance denominator");
  return 1.0 / std::sqrt(denom);
}

Matrix build_dense_weights(const InitializerSpec& spec, RandomSource& rng,
                           Eigen::Index n_in, Eigen::Index n_out) {
  spec.validate();
  switch (spec.base) {
    case InitBase::Hypersphere:
      return unit_hypersphere_matrix(rng, n_in, n_out) *
             corrective_scale(spec, n_in, n_out);
    case InitBase::Orthonormal: {
      // Rectangular case: generate at the larger size and slice. Columns
      // stay orthonormal whenever n_in >= n_out.
      Eigen::Index n = std::max(n_in, n_out);
      Matrix q = orthonormal_matrix(rng, n);
      return q.topLeftCorner(n_in, n_out) * corrective_scale(spec, n_in, n_out);
    }
    case InitBase::UniformHypercube: {
      Matrix w(n_in, n_out);
      for (Eigen::Index i = 0; i < n_in; ++i)
        for (Eigen::Index j = 0; j < n_out; ++j) w(i, j) = rng.uniform(-1.0, 1.0);
      return w * corrective_scale(spec, n_in, n_out);
    }
    case InitBase::GaussianHe:
      return rng.normal_matrix(n_in, n_out) *
             std::sqrt(2.0 / static_cast<double>(n_in));
    case InitBase::GaussianXavier:
      return rng.normal_matrix(n_in, n_out) *
             std::sqrt(2.0 / static_cast<double>(n_in + n_out));
  }
  throw InvalidSpecError("unknown initializer base");
}

Matrix build_conv_filters(const InitializerSpec& spec, RandomSource& rng,
                          int k_h, int k_w, int c_in, int c_out) {
  spec.validate();
  if (k_h < 1 || k_w < 1 || c_in < 1 || c_out < 1)
    throw ShapeError("build_conv_filters: geometry must be positive");
  const Eigen::Index fan_in =
      static_cast<Eigen::Index>(k_h) * k_w * c_in;
  switch (spec.correction) {
    case InitCorrection::None:
      break;
    case InitCorrection::Forward:
      break;
    default:
      throw InvalidSpecError(
          "conv filters support only the forward correction");
  }
  if (spec.base == InitBase::GaussianHe)
    return rng.normal_matrix(fan_in, c_out) *
           std::sqrt(2.0 / static_cast<double>(fan_in));
  if (spec.base == InitBase::GaussianXavier)
    return rng.normal_matrix(fan_in, c_out) *
           std::sqrt(2.0 / static_cast<double>(fan_in + c_out));
  return unit_hypersphere_matrix(rng, fan_in, c_out) *
         corrective_scale(spec, fan_in, c_out);
}

}  // namespace varinit
