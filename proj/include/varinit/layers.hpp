#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "varinit/activations.hpp"
#include "varinit/core.hpp"

namespace varinit {

/// Execution mode. ReEstimate runs forward passes that keep dropout off and
/// allow only BatchNorm running variances to change.
enum class Mode { Train, Eval, ReEstimate };

class Layer {
 public:
  virtual ~Layer() = default;

  /// x is batch-major. rng is required only when the layer samples (dropout
  /// in Train mode).
  virtual Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) = 0;

  /// dy = dL/d(output); returns dL/d(input). Requires a preceding Train-mode
  /// forward; anything else is a stale cache.
  virtual Matrix backward(const Matrix& dy) = 0;

  virtual std::vector<Matrix*> params() { return {}; }
  virtual std::vector<Matrix*> grads() { return {}; }
  virtual std::string kind() const = 0;

 protected:
  void note_forward(Mode mode) { cached_mode_ = mode; }
  void require_train_cache(const std::string& who) const {
    if (cached_mode_ != Mode::Train)
      throw ContractError(who + ": backward without a Train-mode forward");
  }

 private:
  Mode cached_mode_ = Mode::Eval;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(Matrix weights, RowVector bias);
  DenseLayer(Eigen::Index n_in, Eigen::Index n_out);

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) override;
  Matrix backward(const Matrix& dy) override;
  std::vector<Matrix*> params() override { return {&w_, &b_}; }
  std::vector<Matrix*> grads() override { return {&dw_, &db_}; }
  std::string kind() const override { return "dense"; }

  Eigen::Index n_in() const { return w_.rows(); }
  Eigen::Index n_out() const { return w_.cols(); }
  Matrix& weights() { return w_; }
  Matrix& bias() { return b_; }

 private:
  Matrix w_;
  Matrix b_;  // 1 x n_out
  Matrix dw_, db_;
  Matrix x_cache_;
};

class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(ActivationKind f) : f_(f) {}

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) override;
  Matrix backward(const Matrix& dy) override;
  std::string kind() const override { return "activation"; }
  const ActivationKind& activation() const { return f_; }

 private:
  ActivationKind f_;
  Matrix x_cache_;
};

/// Inverted dropout: Train output is input .* mask / p with mask ~
/// Bernoulli(p); Eval and ReEstimate pass the input through unchanged.
class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double keep_prob);

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) override;
  Matrix backward(const Matrix& dy) override;
  std::string kind() const override { return "dropout"; }

  double keep_prob() const { return p_; }
  const Matrix& mask() const { return mask_; }

 private:
  double p_;
  Matrix mask_;
};

enum class BnEstimator { Ema, ExactMean };

/// BatchNorm over the feature axis (channels == 0) or pooled per channel for
/// HWC-flattened conv outputs (channels == C, feature j belongs to channel
/// j % C). Uses biased (1/N) batch variance everywhere.
class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(Eigen::Index features, int channels = 0,
                          double momentum = 0.9, double epsilon = 1e-5);

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) override;
  Matrix backward(const Matrix& dy) override;
  std::vector<Matrix*> params() override { return {&gamma_, &beta_}; }
  std::vector<Matrix*> grads() override { return {&dgamma_, &dbeta_}; }
  std::string kind() const override { return "batchnorm"; }

  Eigen::Index features() const { return gamma_.cols(); }
  int channels() const { return channels_; }
  double momentum() const { return momentum_; }
  double epsilon() const { return epsilon_; }
  Matrix& gamma() { return gamma_; }
  Matrix& beta() { return beta_; }
  Matrix& running_mean() { return running_mean_; }
  Matrix& running_var() { return running_var_; }
  long batches_seen() const { return batches_seen_; }
  void set_batches_seen(long n) { batches_seen_ = n; }

  /// Re-estimation bookkeeping: begin resets the ExactMean accumulator;
  /// finish folds it into running_var. With Ema, forward() in ReEstimate
  /// mode updates running_var directly and finish is a no-op.
  void begin_reestimate(BnEstimator estimator, bool also_means);
  void finish_reestimate();

 private:
  struct GroupStats {
    RowVector mean;  // one entry per group
    RowVector var;
  };
  GroupStats batch_stats(const Matrix& x) const;
  Eigen::Index group_of(Eigen::Index feature) const {
    return channels_ > 0 ? feature % channels_ : feature;
  }
  Eigen::Index group_count() const {
    return channels_ > 0 ? channels_ : gamma_.cols();
  }

  int channels_;
  double momentum_, epsilon_;
  Matrix gamma_, beta_;            // 1 x features
  Matrix running_mean_, running_var_;  // 1 x groups
  Matrix dgamma_, dbeta_;
  long batches_seen_ = 0;

  BnEstimator reest_estimator_ = BnEstimator::Ema;
  bool reest_also_means_ = false;
  RowVector reest_var_sum_, reest_mean_sum_;
  long reest_batches_ = 0;

  // backward cache
  Matrix xhat_cache_;
  RowVector inv_std_cache_;  // per group
};

/// 2-D convolution over HWC-flattened inputs. Filters live in a
/// (k_h*k_w*c_in) x c_out matrix, one output filter per column with
/// row-major (kh, kw, c_in) fan-in layout. Forward uses im2col.
class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(int in_h, int in_w, int c_in, int c_out, int k_h, int k_w,
              int stride, int padding);

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng) override;
  Matrix backward(const Matrix& dy) override;
  std::vector<Matrix*> params() override { return {&filters_, &b_}; }
  std::vector<Matrix*> grads() override { return {&dfilters_, &db_}; }
  std::string kind() const override { return "conv2d"; }

  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }
  int k_h() const { return k_h_; }
  int k_w() const { return k_w_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }
  int out_h() const { return (in_h_ + 2 * padding_ - k_h_) / stride_ + 1; }
  int out_w() const { return (in_w_ + 2 * padding_ - k_w_) / stride_ + 1; }
  Eigen::Index fan_in() const {
    return static_cast<Eigen::Index>(k_h_) * k_w_ * c_in_;
  }
  Matrix& filters() { return filters_; }
  Matrix& bias() { return b_; }

 private:
  Matrix im2col(const Matrix& x) const;  // (batch*out_h*out_w) x fan_in

  int in_h_, in_w_, c_in_, c_out_, k_h_, k_w_, stride_, padding_;
  Matrix filters_, b_;
  Matrix dfilters_, db_;
  Matrix cols_cache_;
  Eigen::Index batch_cache_ = 0;
};

/// Softmax cross entropy, mean over the batch, stable via max subtraction.
/// dlogits already carries the 1/batch factor.
struct LossResult {
  double loss;
  Matrix dlogits;
};
LossResult softmax_cross_entropy(const Matrix& logits,
                                 const std::vector<int>& labels);

class Network {
 public:
  Network() = default;

  Network& add(std::unique_ptr<Layer> layer);
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Matrix forward(const Matrix& x, Mode mode, RandomSource* rng = nullptr);
  /// Backpropagate dL/dlogits through every layer; fills parameter grads.
  void backward(const Matrix& dlogits);

  std::vector<Matrix*> params();
  std::vector<Matrix*> grads();
  /// "layer3:dense:W"-style labels, aligned with params().
  std::vector<std::string> param_names();

  template <typename T>
  std::vector<T*> layers_of() {
    std::vector<T*> out;
    for (auto& l : layers_)
      if (auto* p = dynamic_cast<T*>(l.get())) out.push_back(p);
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  Mode last_forward_mode_ = Mode::Eval;
};

}  // namespace varinit
