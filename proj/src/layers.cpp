#include "varinit/layers.hpp"

#include <cmath>

namespace varinit {

// ---------------------------------------------------------------- Dense

DenseLayer::DenseLayer(Matrix weights, RowVector bias)
    : w_(std::move(weights)), b_(bias) {
  if (b_.cols() != w_.cols())
    throw ShapeError("DenseLayer: bias width disagrees with weights");
}

DenseLayer::DenseLayer(Eigen::Index n_in, Eigen::Index n_out)
    : w_(Matrix::Zero(n_in, n_out)), b_(Matrix::Zero(1, n_out)) {}

Matrix DenseLayer::forward(const Matrix& x, Mode mode, RandomSource*) {
  if (x.cols() != w_.rows())
    throw ShapeError("dense: input width " + std::to_string(x.cols()) +
                     " != n_in " + std::to_string(w_.rows()));
  note_forward(mode);
  if (mode == Mode::Train) x_cache_ = x;
  return (x * w_).rowwise() + b_.row(0);
}

Matrix DenseLayer::backward(const Matrix& dy) {
  require_train_cache("dense");
  dw_ = x_cache_.transpose() * dy;
  db_ = dy.colwise().sum();
  return dy * w_.transpose();
}

// ----------------------------------------------------------- Activation

Matrix ActivationLayer::forward(const Matrix& x, Mode mode, RandomSource*) {
  note_forward(mode);
  if (mode == Mode::Train) x_cache_ = x;
  return apply(f_, x);
}

Matrix ActivationLayer::backward(const Matrix& dy) {
  require_train_cache("activation");
  return dy.cwiseProduct(derivative(f_, x_cache_));
}

// -------------------------------------------------------------- Dropout

DropoutLayer::DropoutLayer(double keep_prob) : p_(keep_prob) {
  if (p_ <= 0.0 || p_ > 1.0)
    throw InvalidSpecError("dropout keep_prob must be in (0, 1]");
}

Matrix DropoutLayer::forward(const Matrix& x, Mode mode, RandomSource* rng) {
  note_forward(mode);
  if (mode != Mode::Train || p_ == 1.0) {
    mask_ = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  if (!rng) throw ContractError("dropout: Train-mode forward needs an rng");
  mask_.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask_(i, j) = rng->bernoulli(p_) ? 1.0 : 0.0;
  return x.cwiseProduct(mask_) / p_;
}

Matrix DropoutLayer::backward(const Matrix& dy) {
  require_train_cache("dropout");
  if (dy.rows() != mask_.rows() || dy.cols() != mask_.cols())
    throw ContractError("dropout: stale mask in backward");
  return dy.cwiseProduct(mask_) / p_;
}

// ------------------------------------------------------------ BatchNorm

BatchNormLayer::BatchNormLayer(Eigen::Index features, int channels,
                               double momentum, double epsilon)
    : channels_(channels), momentum_(momentum), epsilon_(epsilon) {
  if (features < 1) throw ShapeError("batchnorm: features must be positive");
  if (channels_ < 0 || (channels_ > 0 && features % channels_ != 0))
    throw ShapeError("batchnorm: features must be a multiple of channels");
  if (momentum_ <= 0.0 || momentum_ >= 1.0)
    throw InvalidSpecError("batchnorm momentum must be in (0, 1)");
  gamma_ = Matrix::Ones(1, features);
  beta_ = Matrix::Zero(1, features);
  running_mean_ = Matrix::Zero(1, group_count());
  running_var_ = Matrix::Ones(1, group_count());
}

BatchNormLayer::GroupStats BatchNormLayer::batch_stats(const Matrix& x) const {
  const Eigen::Index g = group_count();
  GroupStats s;
  s.mean = RowVector::Zero(g);
  s.var = RowVector::Zero(g);
  RowVector count = RowVector::Zero(g);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index k = group_of(j);
    s.mean(k) += x.col(j).sum();
    count(k) += static_cast<double>(x.rows());
  }
  s.mean = s.mean.cwiseQuotient(count);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index k = group_of(j);
    s.var(k) += (x.col(j).array() - s.mean(k)).square().sum();
  }
  s.var = s.var.cwiseQuotient(count);
  return s;
}

Matrix BatchNormLayer::forward(const Matrix& x, Mode mode, RandomSource*) {
  if (x.cols() != gamma_.cols())
    throw ShapeError("batchnorm: input width disagrees with features");
  note_forward(mode);

  RowVector mu, var;
  if (mode == Mode::Eval) {
    mu = running_mean_.row(0);
    var = running_var_.row(0);
  } else {
    GroupStats s = batch_stats(x);
    mu = s.mean;
    var = s.var;
    if (mode == Mode::Train) {
      running_mean_.row(0) =
          momentum_ * running_mean_.row(0) + (1.0 - momentum_) * mu;
      running_var_.row(0) =
          momentum_ * running_var_.row(0) + (1.0 - momentum_) * var;
      ++batches_seen_;
    } else {  // ReEstimate: only the variance running average may move.
      if (reest_estimator_ == BnEstimator::Ema) {
        running_var_.row(0) =
            momentum_ * running_var_.row(0) + (1.0 - momentum_) * var;
        if (reest_also_means_)
          running_mean_.row(0) =
              momentum_ * running_mean_.row(0) + (1.0 - momentum_) * mu;
      } else {
        reest_var_sum_ += var;
        if (reest_also_means_) reest_mean_sum_ += mu;
        ++reest_batches_;
      }
    }
  }

  RowVector inv_std = (var.array() + epsilon_).rsqrt();
  Matrix xhat(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index k = group_of(j);
    xhat.col(j) = (x.col(j).array() - mu(k)) * inv_std(k);
  }
  if (mode == Mode::Train) {
    xhat_cache_ = xhat;
    inv_std_cache_ = inv_std;
  }
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    y.col(j) = gamma_(0, j) * xhat.col(j).array() + beta_(0, j);
  return y;
}

Matrix BatchNormLayer::backward(const Matrix& dy) {
  require_train_cache("batchnorm");
  const Eigen::Index cols = dy.cols();
  dgamma_ = Matrix::Zero(1, cols);
  dbeta_ = Matrix::Zero(1, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    dgamma_(0, j) = dy.col(j).cwiseProduct(xhat_cache_.col(j)).sum();
    dbeta_(0, j) = dy.col(j).sum();
  }
  // Backward through the batch statistics, pooled per group.
  const Eigen::Index g = group_count();
  RowVector sum_dxhat = RowVector::Zero(g);
  RowVector sum_dxhat_xhat = RowVector::Zero(g);
  RowVector count = RowVector::Zero(g);
  Matrix dxhat(dy.rows(), cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    dxhat.col(j) = dy.col(j) * gamma_(0, j);
    Eigen::Index k = group_of(j);
    sum_dxhat(k) += dxhat.col(j).sum();
    sum_dxhat_xhat(k) += dxhat.col(j).cwiseProduct(xhat_cache_.col(j)).sum();
    count(k) += static_cast<double>(dy.rows());
  }
  Matrix dx(dy.rows(), cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    Eigen::Index k = group_of(j);
    dx.col(j) = inv_std_cache_(k) / count(k) *
                (count(k) * dxhat.col(j).array() - sum_dxhat(k) -
                 xhat_cache_.col(j).array() * sum_dxhat_xhat(k));
  }
  return dx;
}

void BatchNormLayer::begin_reestimate(BnEstimator estimator, bool also_means) {
  reest_estimator_ = estimator;
  reest_also_means_ = also_means;
  reest_var_sum_ = RowVector::Zero(group_count());
  reest_mean_sum_ = RowVector::Zero(group_count());
  reest_batches_ = 0;
}

void BatchNormLayer::finish_reestimate() {
  if (reest_estimator_ == BnEstimator::ExactMean && reest_batches_ > 0) {
    running_var_.row(0) = reest_var_sum_ / static_cast<double>(reest_batches_);
    if (reest_also_means_)
      running_mean_.row(0) =
          reest_mean_sum_ / static_cast<double>(reest_batches_);
  }
  reest_batches_ = 0;
}

// --------------------------------------------------------------- Conv2d

Conv2dLayer::Conv2dLayer(int in_h, int in_w, int c_in, int c_out, int k_h,
                         int k_w, int stride, int padding)
    : in_h_(in_h),
      in_w_(in_w),
      c_in_(c_in),
      c_out_(c_out),
      k_h_(k_h),
      k_w_(k_w),
      stride_(stride),
      padding_(padding) {
  if (in_h < 1 || in_w < 1 || c_in < 1 || c_out < 1 || k_h < 1 || k_w < 1 ||
      stride < 1 || padding < 0)
    throw ShapeError("conv2d: bad geometry");
  if (in_h + 2 * padding < k_h || in_w + 2 * padding < k_w)
    throw ShapeError("conv2d: kernel larger than padded input");
  filters_ = Matrix::Zero(fan_in(), c_out_);
  b_ = Matrix::Zero(1, c_out_);
}

Matrix Conv2dLayer::im2col(const Matrix& x) const {
  const int oh = out_h(), ow = out_w();
  Matrix cols(x.rows() * oh * ow, fan_in());
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        Eigen::Index row = (n * oh + i) * ow + j;
        Eigen::Index col = 0;
        for (int ki = 0; ki < k_h_; ++ki) {
          int src_i = i * stride_ + ki - padding_;
          for (int kj = 0; kj < k_w_; ++kj) {
            int src_j = j * stride_ + kj - padding_;
            for (int c = 0; c < c_in_; ++c, ++col) {
              if (src_i < 0 || src_i >= in_h_ || src_j < 0 || src_j >= in_w_)
                cols(row, col) = 0.0;
              else
                cols(row, col) =
                    x(n, (static_cast<Eigen::Index>(src_i) * in_w_ + src_j) *
                               c_in_ +
                           c);
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix Conv2dLayer::forward(const Matrix& x, Mode mode, RandomSource*) {
  if (x.cols() != static_cast<Eigen::Index>(in_h_) * in_w_ * c_in_)
    throw ShapeError("conv2d: input width disagrees with H*W*C");
  note_forward(mode);
  Matrix cols = im2col(x);
  Matrix ycols = (cols * filters_).rowwise() + b_.row(0);  // (N*oh*ow) x c_out
  if (mode == Mode::Train) {
    cols_cache_ = cols;
    batch_cache_ = x.rows();
  }
  const int oh = out_h(), ow = out_w();
  Matrix y(x.rows(), static_cast<Eigen::Index>(oh) * ow * c_out_);
  for (Eigen::Index n = 0; n < x.rows(); ++n)
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(oh) * ow; ++p)
      for (int c = 0; c < c_out_; ++c)
        y(n, p * c_out_ + c) = ycols(n * oh * ow + p, c);
  return y;
}

Matrix Conv2dLayer::backward(const Matrix& dy) {
  require_train_cache("conv2d");
  const int oh = out_h(), ow = out_w();
  const Eigen::Index batch = batch_cache_;
  if (dy.rows() != batch ||
      dy.cols() != static_cast<Eigen::Index>(oh) * ow * c_out_)
    throw ContractError("conv2d: stale cache in backward");
  Matrix dycols(batch * oh * ow, c_out_);
  for (Eigen::Index n = 0; n < batch; ++n)
    for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(oh) * ow; ++p)
      for (int c = 0; c < c_out_; ++c)
        dycols(n * oh * ow + p, c) = dy(n, p * c_out_ + c);

  dfilters_ = cols_cache_.transpose() * dycols;
  db_ = dycols.colwise().sum();

  Matrix dcols = dycols * filters_.transpose();
  Matrix dx = Matrix::Zero(batch, static_cast<Eigen::Index>(in_h_) * in_w_ * c_in_);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        Eigen::Index row = (n * oh + i) * ow + j;
        Eigen::Index col = 0;
        for (int ki = 0; ki < k_h_; ++ki) {
          int src_i = i * stride_ + ki - padding_;
          for (int kj = 0; kj < k_w_; ++kj) {
            int src_j = j * stride_ + kj - padding_;
            for (int c = 0; c < c_in_; ++c, ++col) {
              if (src_i >= 0 && src_i < in_h_ && src_j >= 0 && src_j < in_w_)
                dx(n, (static_cast<Eigen::Index>(src_i) * in_w_ + src_j) *
                          c_in_ +
                      c) += dcols(row, col);
            }
          }
        }
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------- Loss

LossResult softmax_cross_entropy(const Matrix& logits,
                                 const std::vector<int>& labels) {
  const Eigen::Index batch = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw ShapeError("softmax_cross_entropy: label count disagrees with batch");
  LossResult out;
  out.dlogits.resize(batch, classes);
  double loss = 0.0;
  for (Eigen::Index n = 0; n < batch; ++n) {
    int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= classes)
      throw DataError("softmax_cross_entropy: label out of range: " +
                      std::to_string(y));
    double mx = logits.row(n).maxCoeff();
    RowVector shifted = logits.row(n).array() - mx;
    RowVector ex = shifted.array().exp();
    double z = ex.sum();
    loss += std::log(z) - shifted(y);
    out.dlogits.row(n) = ex / z;
    out.dlogits(n, y) -= 1.0;
  }
  out.loss = loss / static_cast<double>(batch);
  out.dlogits /= static_cast<double>(batch);
  return out;
}

// -------------------------------------------------------------- Network

Network& Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Matrix Network::forward(const Matrix& x, Mode mode, RandomSource* rng) {
  last_forward_mode_ = mode;
  Matrix h = x;
  for (auto& l : layers_) h = l->forward(h, mode, rng);
  require_finite(h, "network forward");
  return h;
}

void Network::backward(const Matrix& dlogits) {
  if (last_forward_mode_ != Mode::Train)
    throw ContractError("network backward without a Train-mode forward");
  Matrix d = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    d = (*it)->backward(d);
}

std::vector<Matrix*> Network::params() {
  std::vector<Matrix*> out;
  for (auto& l : layers_)
    for (Matrix* p : l->params()) out.push_back(p);
  return out;
}

std::vector<Matrix*> Network::grads() {
  std::vector<Matrix*> out;
  for (auto& l : layers_)
    for (Matrix* g : l->grads()) out.push_back(g);
  return out;
}

std::vector<std::string> Network::param_names() {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto ps = layers_[i]->params();
    for (std::size_t k = 0; k < ps.size(); ++k)
      out.push_back("layer" + std::to_string(i) + ":" + layers_[i]->kind() +
                    ":p" + std::to_string(k));
  }
  return out;
}

}  // namespace varinit
