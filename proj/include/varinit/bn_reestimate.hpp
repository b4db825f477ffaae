#pragma once

#include "varinit/data.hpp"
#include "varinit/layers.hpp"

namespace varinit {

struct ReEstimateConfig {
  long epochs = 1;
  BnEstimator estimator = BnEstimator::ExactMean;
  Eigen::Index batch_size = 64;
  bool also_means = false;  // extension; the stated procedure updates only var
};

/// Replay `data` in its natural order with dropout off, letting only the
/// BatchNorm variance running averages move. No gradients are computed; all
/// other tensors come back bit-identical. Returns false (with everything
/// untouched) when the network has no BatchNorm layers.
bool reestimate(Network& net, const Dataset& data, const ReEstimateConfig& cfg);

struct EvalResult {
  double loss = 0.0;
  double error_rate = 0.0;
};

/// Mean loss and top-1 error over the dataset in Eval mode.
EvalResult evaluate(Network& net, const Dataset& data,
                    Eigen::Index batch_size = 256);

}  // namespace varinit
