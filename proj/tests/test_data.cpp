#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "varinit/data.hpp"

using namespace varinit;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::temp_directory_path() / "varinit_data_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("idx write/load round trip") {
  fs::path dir = tmp_dir();
  Dataset ds = toy_mnist(120, 4);
  write_mnist_idx(ds, (dir / "train-images-idx3-ubyte").string(),
                  (dir / "train-labels-idx1-ubyte").string(), 28, 28);
  write_mnist_idx(subset(ds, 40), (dir / "t10k-images-idx3-ubyte").string(),
                  (dir / "t10k-labels-idx1-ubyte").string(), 28, 28);
  auto [train, test] = load_mnist_idx(dir.string());
  CHECK(train.size() == 120);
  CHECK(train.features() == 784);
  CHECK(test.size() == 40);
  CHECK(train.labels == ds.labels);
  // pixels quantized to bytes and rescaled
  CHECK((train.images - ds.images).cwiseAbs().maxCoeff() < 0.5 / 255.0 + 1e-12);
  CHECK(train.images.minCoeff() >= 0.0);
  CHECK(train.images.maxCoeff() <= 1.0);
}

TEST_CASE("truncated idx file is a format error with offset") {
  fs::path dir = tmp_dir() / "trunc";
  fs::create_directories(dir);
  Dataset ds = toy_mnist(10, 5);
  std::string img = (dir / "train-images-idx3-ubyte").string();
  write_mnist_idx(ds, img, (dir / "train-labels-idx1-ubyte").string(), 28, 28);
  fs::resize_file(img, 2000);
  try {
    load_mnist_idx(dir.string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("bad idx magic is a format error") {
  fs::path dir = tmp_dir() / "magic";
  fs::create_directories(dir);
  std::ofstream out(dir / "train-images-idx3-ubyte", std::ios::binary);
  out.write("\x00\x00\x08\x99", 4);
  out.close();
  CHECK_THROWS_AS(load_mnist_idx(dir.string()), FormatError);
}

TEST_CASE("cifar10 binary loader") {
  fs::path dir = tmp_dir() / "cifar";
  fs::create_directories(dir);
  RandomSource rng(6);
  auto write_batch = [&](const std::string& name, int records) {
    std::ofstream out(dir / name, std::ios::binary);
    for (int r = 0; r < records; ++r) {
      out.put(static_cast<char>(rng.index(10)));
      for (int i = 0; i < 3072; ++i)
        out.put(static_cast<char>(rng.index(256)));
    }
  };
  for (int b = 1; b <= 5; ++b)
    write_batch("data_batch_" + std::to_string(b) + ".bin", 6);
  write_batch("test_batch.bin", 4);

  auto [train, test] = load_cifar10_binary((dir).string());
  CHECK(train.size() == 30);
  CHECK(train.features() == 32 * 32 * 3);
  CHECK(test.size() == 4);
  for (int y : train.labels) CHECK(y < 10);

  SUBCASE("record-size mismatch is a format error") {
    fs::resize_file(dir / "test_batch.bin", 3073 * 3 + 100);
    CHECK_THROWS_AS(load_cifar10_binary(dir.string()), FormatError);
  }
}

TEST_CASE("standardization") {
  Dataset ds = toy_mnist(500, 7, 10, 32);
  FeatureStats stats = compute_stats(ds);
  Dataset std_ds = standardize(ds, stats);
  SUBCASE("train split is centered") {
    CHECK(std_ds.images.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
    CHECK((variance(std_ds.images, 0).array() - 1.0).abs().maxCoeff() < 1e-8);
  }
  SUBCASE("idempotence") {
    FeatureStats again = compute_stats(std_ds);
    Dataset twice = standardize(std_ds, again);
    CHECK((twice.images - std_ds.images).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("constant feature is centered, not scaled") {
    Dataset flat = ds;
    flat.images.col(0).setConstant(0.5);
    FeatureStats s = compute_stats(flat);
    CHECK(s.stddev(0) == 1.0);
    Dataset out = standardize(flat, s);
    CHECK(out.images.col(0).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("test standardized with train stats is generally off-center") {
    Dataset other = toy_mnist(500, 8, 10, 32);
    Dataset out = standardize(other, stats);
    CHECK(out.images.colwise().mean().cwiseAbs().maxCoeff() > 1e-3);
  }
}

TEST_CASE("holdout split") {
  Dataset ds = toy_mnist(6000, 9, 10, 16);
  auto [train, val] = split_holdout(ds, 500, 3);
  CHECK(train.size() == 5500);
  CHECK(val.size() == 500);
  CHECK(val.split == Split::Val);
  auto [train2, val2] = split_holdout(ds, 500, 3);
  CHECK((val.images - val2.images).cwiseAbs().maxCoeff() == 0.0);
  // different seed picks a different holdout
  auto [train3, val3] = split_holdout(ds, 500, 4);
  CHECK((val.images - val3.images).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("batching") {
  Dataset ds = toy_mnist(100, 10, 10, 8);
  auto bs = batches(ds, 64, false, 0);
  REQUIRE(bs.size() == 2);
  CHECK(bs[0].images.rows() == 64);
  CHECK(bs[1].images.rows() == 36);
  SUBCASE("natural order without shuffle") {
    CHECK((bs[0].images.row(0) - ds.images.row(0)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SUBCASE("seeded shuffle is deterministic") {
    auto s1 = batches(ds, 32, true, 5);
    auto s2 = batches(ds, 32, true, 5);
    CHECK((s1[0].images - s2[0].images).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s1[0].labels == s2[0].labels);
  }
}
