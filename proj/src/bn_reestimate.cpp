#include "varinit/bn_reestimate.hpp"

namespace varinit {

bool reestimate(Network& net, const Dataset& data,
                const ReEstimateConfig& cfg) {
  if (cfg.epochs < 1)
    throw InvalidSpecError("reestimate: epochs must be at least 1");
  if (data.size() == 0) throw DataError("reestimate: empty dataset");
  auto bns = net.layers_of<BatchNormLayer>();
  if (bns.empty()) return false;

  for (auto* bn : bns) bn->begin_reestimate(cfg.estimator, cfg.also_means);
  // Natural (unshuffled) order so the pass is reproducible.
  auto bs = batches(data, cfg.batch_size, /*shuffle=*/false, /*seed=*/0);
  for (long e = 0; e < cfg.epochs; ++e)
    for (const Batch& b : bs) net.forward(b.images, Mode::ReEstimate, nullptr);
  for (auto* bn : bns) bn->finish_reestimate();
  return true;
}

EvalResult evaluate(Network& net, const Dataset& data,
                    Eigen::Index batch_size) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  double loss_sum = 0.0;
  long wrong = 0;
  for (const Batch& b : batches(data, batch_size, false, 0)) {
    Matrix logits = net.forward(b.images, Mode::Eval, nullptr);
    LossResult lr = softmax_cross_entropy(logits, b.labels);
    loss_sum += lr.loss * static_cast<double>(b.images.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index pred;
      logits.row(i).maxCoeff(&pred);
      if (static_cast<int>(pred) != b.labels[static_cast<std::size_t>(i)])
        ++wrong;
    }
  }
  EvalResult out;
  out.loss = loss_sum / static_cast<double>(data.size());
  out.error_rate = static_cast<double>(wrong) / static_cast<double>(data.size());
  return out;
}

}  // namespace varinit
