#include "varinit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace varinit {

void Dataset::validate() const {
  if (images.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DataError("dataset: image/label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw DataError("dataset: label out of range: " + std::to_string(y));
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path,
                        std::streamoff& offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(offset));
  offset += 4;
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

Matrix read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::streamoff offset = 0;
  std::uint32_t magic = read_be32(in, path, offset);
  if (magic != 2051)
    throw FormatError(path + ": bad image magic " + std::to_string(magic) +
                      " at byte offset 0");
  std::uint32_t n = read_be32(in, path, offset);
  std::uint32_t rows = read_be32(in, path, offset);
  std::uint32_t cols = read_be32(in, path, offset);
  const Eigen::Index features = static_cast<Eigen::Index>(rows) * cols;
  Matrix images(n, features);
  std::vector<unsigned char> buf(static_cast<std::size_t>(features));
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (!in)
      throw FormatError(path + ": truncated at byte offset " +
                        std::to_string(offset));
    offset += static_cast<std::streamoff>(buf.size());
    for (Eigen::Index j = 0; j < features; ++j)
      images(i, j) = buf[static_cast<std::size_t>(j)] / 255.0;
  }
  return images;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::streamoff offset = 0;
  std::uint32_t magic = read_be32(in, path, offset);
  if (magic != 2049)
    throw FormatError(path + ": bad label magic " + std::to_string(magic) +
                      " at byte offset 0");
  std::uint32_t n = read_be32(in, path, offset);
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    int c = in.get();
    if (c == EOF)
      throw FormatError(path + ": truncated at byte offset " +
                        std::to_string(offset));
    ++offset;
    labels[i] = c;
  }
  return labels;
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

std::pair<Dataset, Dataset> load_mnist_idx(const std::string& dir) {
  Dataset train, test;
  train.images = read_idx_images(dir + "/train-images-idx3-ubyte");
  train.labels = read_idx_labels(dir + "/train-labels-idx1-ubyte");
  train.split = Split::Train;
  test.images = read_idx_images(dir + "/t10k-images-idx3-ubyte");
  test.labels = read_idx_labels(dir + "/t10k-labels-idx1-ubyte");
  test.split = Split::Test;
  train.validate();
  test.validate();
  return {std::move(train), std::move(test)};
}

void write_mnist_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path, int rows, int cols) {
  if (static_cast<Eigen::Index>(rows) * cols != ds.features())
    throw ShapeError("write_mnist_idx: rows*cols disagrees with features");
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  write_be32(imgs, 2051);
  write_be32(imgs, static_cast<std::uint32_t>(ds.size()));
  write_be32(imgs, static_cast<std::uint32_t>(rows));
  write_be32(imgs, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    for (Eigen::Index j = 0; j < ds.features(); ++j) {
      double v = std::clamp(ds.images(i, j), 0.0, 1.0);
      imgs.put(static_cast<char>(std::lround(v * 255.0)));
    }
  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open " + labels_path);
  write_be32(labs, 2049);
  write_be32(labs, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) labs.put(static_cast<char>(y));
}

namespace {

void read_cifar_file(const std::string& path, std::vector<double>& pixels,
                     std::vector<int>& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  constexpr std::size_t kRecord = 3073;
  constexpr int kH = 32, kW = 32, kC = 3;
  std::vector<unsigned char> rec(kRecord);
  std::streamoff offset = 0;
  while (true) {
    in.read(reinterpret_cast<char*>(rec.data()), kRecord);
    std::streamsize got = in.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(kRecord))
      throw FormatError(path + ": record-size mismatch at byte offset " +
                        std::to_string(offset));
    offset += got;
    if (rec[0] > 9)
      throw FormatError(path + ": label byte out of range");
    labels.push_back(rec[0]);
    // channel-major planes -> HWC
    for (int h = 0; h < kH; ++h)
      for (int w = 0; w < kW; ++w)
        for (int c = 0; c < kC; ++c)
          pixels.push_back(rec[1 + (c * kH + h) * kW + w] / 255.0);
  }
}

Dataset cifar_dataset(std::vector<double>&& pixels, std::vector<int>&& labels,
                      Split split) {
  constexpr Eigen::Index kFeatures = 32 * 32 * 3;
  Dataset ds;
  ds.split = split;
  ds.labels = std::move(labels);
  const Eigen::Index n = static_cast<Eigen::Index>(ds.labels.size());
  ds.images.resize(n, kFeatures);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < kFeatures; ++j)
      ds.images(i, j) = pixels[static_cast<std::size_t>(i * kFeatures + j)];
  ds.validate();
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& dir) {
  std::vector<double> train_px, test_px;
  std::vector<int> train_y, test_y;
  for (int b = 1; b <= 5; ++b)
    read_cifar_file(dir + "/data_batch_" + std::to_string(b) + ".bin",
                    train_px, train_y);
  read_cifar_file(dir + "/test_batch.bin", test_px, test_y);
  return {cifar_dataset(std::move(train_px), std::move(train_y), Split::Train),
          cifar_dataset(std::move(test_px), std::move(test_y), Split::Test)};
}

FeatureStats compute_stats(const Dataset& train) {
  FeatureStats s;
  s.mean = train.images.colwise().mean();
  Vector var = variance(train.images, 0);
  s.stddev.resize(var.size());
  for (Eigen::Index j = 0; j < var.size(); ++j)
    s.stddev(j) = var(j) > 0.0 ? std::sqrt(var(j)) : 1.0;
  return s;
}

Dataset standardize(const Dataset& ds, const FeatureStats& stats) {
  if (stats.mean.size() != ds.features())
    throw ShapeError("standardize: stats width disagrees with dataset");
  Dataset out = ds;
  out.images = (ds.images.rowwise() - stats.mean).array().rowwise() /
               stats.stddev.array();
  return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& train,
                                          Eigen::Index holdout,
                                          std::uint64_t seed) {
  if (holdout <= 0 || holdout >= train.size())
    throw DataError("split_holdout: holdout size out of range");
  RandomSource rng(seed);
  auto perm = rng.permutation(static_cast<std::size_t>(train.size()));
  Eigen::Index keep = train.size() - holdout;
  Dataset tr, val;
  tr.split = Split::Train;
  val.split = Split::Val;
  tr.classes = val.classes = train.classes;
  tr.images.resize(keep, train.features());
  val.images.resize(holdout, train.features());
  tr.labels.resize(static_cast<std::size_t>(keep));
  val.labels.resize(static_cast<std::size_t>(holdout));
  for (Eigen::Index i = 0; i < keep; ++i) {
    tr.images.row(i) = train.images.row(static_cast<Eigen::Index>(perm[i]));
    tr.labels[static_cast<std::size_t>(i)] = train.labels[perm[i]];
  }
  for (Eigen::Index i = 0; i < holdout; ++i) {
    std::size_t src = perm[static_cast<std::size_t>(keep + i)];
    val.images.row(i) = train.images.row(static_cast<Eigen::Index>(src));
    val.labels[static_cast<std::size_t>(i)] = train.labels[src];
  }
  return {std::move(tr), std::move(val)};
}

std::vector<Batch> batches(const Dataset& ds, Eigen::Index size, bool shuffle,
                           std::uint64_t seed) {
  if (size < 1) throw DataError("batches: size must be at least 1");
  std::vector<std::size_t> order(static_cast<std::size_t>(ds.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    RandomSource rng(seed);
    order = rng.permutation(order.size());
  }
  std::vector<Batch> out;
  for (Eigen::Index start = 0; start < ds.size(); start += size) {
    Eigen::Index count = std::min(size, ds.size() - start);
    Batch b;
    b.images.resize(count, ds.features());
    b.labels.resize(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      std::size_t src = order[static_cast<std::size_t>(start + i)];
      b.images.row(i) = ds.images.row(static_cast<Eigen::Index>(src));
      b.labels[static_cast<std::size_t>(i)] = ds.labels[src];
    }
    out.push_back(std::move(b));
  }
  return out;
}

Dataset toy_mnist(Eigen::Index n, std::uint64_t seed, int classes,
                  Eigen::Index features, double blob_spread, double noise) {
  RandomSource rng(seed);
  Matrix centers(classes, features);
  for (int c = 0; c < classes; ++c)
    for (Eigen::Index j = 0; j < features; ++j)
      centers(c, j) = blob_spread * rng.normal();
  Dataset ds;
  ds.classes = classes;
  ds.images.resize(n, features);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (Eigen::Index j = 0; j < features; ++j) {
      double v = centers(c, j) + noise * rng.normal();
      // squash into [0,1] so the pixels look like scaled image bytes
      ds.images(i, j) = 1.0 / (1.0 + std::exp(-v));
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, Eigen::Index n) {
  if (n > ds.size()) n = ds.size();
  Dataset out;
  out.split = ds.split;
  out.classes = ds.classes;
  out.images = ds.images.topRows(n);
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  return out;
}

}  // namespace varinit
