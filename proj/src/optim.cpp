#include "varinit/optim.hpp"

#include <cmath>

namespace varinit {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "nesterov") return OptimizerKind::NesterovMomentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw InvalidSpecError("unknown optimizer: " + name);
}

OptimizerState::OptimizerState(OptimizerConfig cfg,
                               const std::vector<Matrix*>& params)
    : cfg_(cfg) {
  for (const Matrix* p : params) {
    slot1_.push_back(Matrix::Zero(p->rows(), p->cols()));
    if (cfg_.kind == OptimizerKind::Adam)
      slot2_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void OptimizerState::step(const std::vector<Matrix*>& params,
                          const std::vector<Matrix*>& grads, double lr,
                          const std::vector<std::string>& names) {
  if (params.size() != slot1_.size() || grads.size() != params.size())
    throw ShapeError("optimizer step: parameter list changed size");
  ++steps_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = *params[i];
    if (grads[i]->rows() != w.rows() || grads[i]->cols() != w.cols())
      throw ShapeError("optimizer step: gradient shape mismatch");
    Matrix g = *grads[i];
    if (!g.allFinite()) {
      std::string who = i < names.size() ? names[i] : std::to_string(i);
      throw ContractError("optimizer step: non-finite gradient in " + who);
    }
    if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * w;

    switch (cfg_.kind) {
      case OptimizerKind::Sgd:
        w -= lr * g;
        break;
      case OptimizerKind::NesterovMomentum: {
        Matrix v_prev = slot1_[i];
        slot1_[i] = cfg_.momentum * slot1_[i] - lr * g;
        w += -cfg_.momentum * v_prev + (1.0 + cfg_.momentum) * slot1_[i];
        break;
      }
      case OptimizerKind::Adam: {
        slot1_[i] = cfg_.beta1 * slot1_[i] + (1.0 - cfg_.beta1) * g;
        slot2_[i] = cfg_.beta2 * slot2_[i].array() +
                    (1.0 - cfg_.beta2) * g.array().square();
        double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        Matrix m_hat = slot1_[i] / c1;
        Matrix v_hat = slot2_[i] / c2;
        w.array() -=
            lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.epsilon);
        break;
      }
    }
  }
}

void OptimizerState::reset_momentum() {
  for (Matrix& m : slot1_) m.setZero();
  for (Matrix& m : slot2_) m.setZero();
}

double lr_at(const LrSchedule& schedule, long epoch) {
  if (epoch < 0) throw InvalidSpecError("lr_at: negative epoch");
  long passed = 0;
  for (long m : schedule.milestones)
    if (epoch >= m) ++passed;
  return schedule.base_lr * std::pow(schedule.decay_factor,
                                     static_cast<double>(passed));
}

}  // namespace varinit
