#pragma once

#include <string>
#include <utility>
#include <vector>

#include "varinit/core.hpp"

namespace varinit {

enum class Split { Train, Val, Test };

struct Dataset {
  Matrix images;            // N x features, batch-major
  std::vector<int> labels;  // class indices
  Split split = Split::Train;
  int classes = 10;

  Eigen::Index size() const { return images.rows(); }
  Eigen::Index features() const { return images.cols(); }
  void validate() const;
};

/// Per-feature standardization statistics, always computed on a train split.
struct FeatureStats {
  RowVector mean;
  RowVector stddev;  // zero-variance features keep stddev 1 (centering only)
};

/// MNIST IDX files: big-endian, magic 2051 (images) / 2049 (labels). Pixels
/// scale to [0, 1]. Expects train-images-idx3-ubyte etc. under `dir`
/// (the .gz-stripped standard names).
std::pair<Dataset, Dataset> load_mnist_idx(const std::string& dir);

/// Write a dataset back out in IDX format (rows x cols per image).
void write_mnist_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path, int rows, int cols);

/// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072 pixels in
/// channel-major (R plane, G plane, B plane) order. Decoded to HWC layout,
/// scaled to [0, 1].
std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& dir);

FeatureStats compute_stats(const Dataset& train);
/// Center/scale with the given stats (train stats reused for val/test).
Dataset standardize(const Dataset& ds, const FeatureStats& stats);

/// Seed-deterministic holdout: shuffle indices, take the last `holdout`
/// examples as the validation set.
std::pair<Dataset, Dataset> split_holdout(const Dataset& train,
                                          Eigen::Index holdout,
                                          std::uint64_t seed);

struct Batch {
  Matrix images;
  std::vector<int> labels;
};

/// Deterministic batch sequence; the final partial batch is included.
std::vector<Batch> batches(const Dataset& ds, Eigen::Index size, bool shuffle,
                           std::uint64_t seed);

/// Synthetic stand-in for MNIST: Gaussian class blobs with the same shapes,
/// so every test and benchmark runs without downloads. Pixel range [0, 1].
Dataset toy_mnist(Eigen::Index n, std::uint64_t seed, int classes = 10,
                  Eigen::Index features = 784, double blob_spread = 2.0,
                  double noise = 1.0);

Dataset subset(const Dataset& ds, Eigen::Index n);

}  // namespace varinit
