#pragma once

#include <string>

#include "varinit/activations.hpp"
#include "varinit/core.hpp"

namespace varinit {

enum class InitBase { Hypersphere, Orthonormal, UniformHypercube, GaussianHe, GaussianXavier };

enum class InitCorrection {
  None,
  Forward,          // 1/sqrt(E[f(z)^2]/p)
  Backward,         // 1/sqrt(p E[f'(z)^2]); used by the backward synthetic runs
  ForwardBackward,  // 1/sqrt(E[f(z)^2]/p + p E[f'(z)^2])
  GeneralizedXavier // sqrt(3)/sqrt((n_in/p) E[f^2] + p n_out E[f'^2]) on Unif[-1,1]
};

struct InitializerSpec {
  InitBase base = InitBase::Hypersphere;
  InitCorrection correction = InitCorrection::ForwardBackward;
  double keep_prob = 1.0;
  ActivationKind activation_in = ActivationKind::identity();   // E[f(z^{l-1})^2]
  ActivationKind activation_out = ActivationKind::relu();      // E[f'(z^l)^2]
  FactorMethod factor_method = FactorMethod::Quadrature;

  void validate() const;
};

/// Named presets accepted in config files: hypersphere_fwd, hypersphere_bwd,
/// hypersphere_fwdbwd, orthonormal_fwdbwd, xavier, he, generalized_xavier.
/// Activations and keep_prob are filled in by the caller.
InitializerSpec named_initializer(const std::string& name);
std::string initializer_name(const InitializerSpec& spec);

/// Matrix whose columns lie on the unit hypersphere: normalize the columns
/// of a standard Gaussian draw. All-zero columns (probability ~0) redraw.
Matrix unit_hypersphere_matrix(RandomSource& rng, Eigen::Index n_in,
                               Eigen::Index n_out);

/// Orthogonal matrix via Householder QR of a Gaussian draw, with the sign of
/// diag(R) fixed positive so the distribution is Haar.
Matrix orthonormal_matrix(RandomSource& rng, Eigen::Index n);

/// The corrective scalar the base matrix gets multiplied by.
double corrective_scale(const InitializerSpec& spec, Eigen::Index n_in,
                        Eigen::Index n_out);

/// Base matrix times corrective scale. Baselines: GaussianXavier has entry
/// std sqrt(2/(n_in+n_out)); GaussianHe has std sqrt(2/n_in).
Matrix build_dense_weights(const InitializerSpec& spec, RandomSource& rng,
                           Eigen::Index n_in, Eigen::Index n_out);

/// Filters as a (k_h*k_w*c_in) x c_out matrix, one output filter per column,
/// each normalized to unit norm over its fan-in then scaled. Only None and
/// Forward corrections are valid for filters.
Matrix build_conv_filters(const InitializerSpec& spec, RandomSource& rng,
                          int k_h, int k_w, int c_in, int c_out);

}  // namespace varinit
