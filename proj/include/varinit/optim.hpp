#pragma once

#include <string>
#include <vector>

#include "varinit/core.hpp"

namespace varinit {

enum class OptimizerKind { Sgd, NesterovMomentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double momentum = 0.9;       // Nesterov
  double beta1 = 0.9;          // Adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;   // l2, added to gradients before the update
  long momentum_reset_every = 0;  // epochs; 0 = never
};

OptimizerKind parse_optimizer(const std::string& name);

/// Per-parameter slots plus the step counter.
class OptimizerState {
 public:
  OptimizerState(OptimizerConfig cfg, const std::vector<Matrix*>& params);

  /// One update. Slots were sized from the params passed at construction;
  /// names (optional) label layers in NaN diagnostics.
  void step(const std::vector<Matrix*>& params,
            const std::vector<Matrix*>& grads, double lr,
            const std::vector<std::string>& names = {});

  /// Zero the velocity / moment slots ("momentum reset").
  void reset_momentum();

  long steps() const { return steps_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix> slot1_;  // velocity or first moment
  std::vector<Matrix> slot2_;  // second moment (Adam)
  long steps_ = 0;
};

/// Piecewise-constant decay: base_lr * decay_factor^(milestones passed).
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_factor = 0.1;
  std::vector<long> milestones;  // strictly increasing epoch indices
};

double lr_at(const LrSchedule& schedule, long epoch);

}  // namespace varinit
