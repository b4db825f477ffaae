#pragma once

#include <string>
#include <vector>

#include "varinit/activations.hpp"
#include "varinit/core.hpp"
#include "varinit/init.hpp"

namespace varinit {

enum class PropagationDirection { Forward, Backward };

struct PropagationConfig {
  PropagationDirection direction = PropagationDirection::Forward;
  int depth = 20;
  std::vector<int> widths;  // defaults to 15 layers of 500 then 5 of 250
  ActivationKind activation = ActivationKind::relu();
  double keep_prob = 1.0;
  InitializerSpec initializer;  // activations/keep_prob filled from above
  int batch = 256;
  std::uint64_t seed = 0;
  int histogram_bins = 50;
  double backward_injection_std = 0.01;

  static std::vector<int> default_widths();
  void validate() const;
};

struct LayerHistogram {
  std::vector<double> edges;   // bins+1 edges
  std::vector<long> counts;    // over kept (nonzero) entries only
  long kept = 0;
};

struct VariancePropagationReport {
  std::vector<double> layer_variance;  // over ALL entries, per layer
  std::vector<LayerHistogram> histograms;
  bool exploded = false;
  int exploded_at = -1;  // first non-finite layer (0-based), -1 if none
  PropagationConfig config;
};

/// Feed a standard normal batch through depth layers of
/// dropout -> weights -> activation, recording pre-activation variance.
VariancePropagationReport propagate_forward(const PropagationConfig& cfg);

/// Inject delta ~ N(0, std^2) at the top and run the backward recurrence
/// delta^l = (W^{l+1} delta^{l+1}) .* f'(z^l) with the dropout masks from a
/// matching forward pass, recording error-signal variance per layer.
VariancePropagationReport propagate_backward(const PropagationConfig& cfg);

VariancePropagationReport propagate(const PropagationConfig& cfg);

/// Writes <prefix>_variance.csv (layer,variance) and one
/// <prefix>_hist_layer<k>.csv (bin_lo,bin_hi,count) per layer.
void export_report(const VariancePropagationReport& report,
                   const std::string& dir, const std::string& prefix);

/// Least-squares slope of log(variance) over layers [lo, hi], i.e. the
/// fitted per-layer variance growth ratio.
double fitted_growth_ratio(const VariancePropagationReport& report, int lo,
                           int hi);

}  // namespace varinit
