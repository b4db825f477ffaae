#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "varinit/varprop.hpp"

using namespace varinit;

namespace {

PropagationConfig base_config(PropagationDirection dir, const std::string& init,
                              double p) {
  PropagationConfig cfg;
  cfg.direction = dir;
  cfg.widths = PropagationConfig::default_widths();
  cfg.activation = ActivationKind::relu();
  cfg.keep_prob = p;
  cfg.initializer = named_initializer(init);
  cfg.seed = 123;
  return cfg;
}

}  // namespace

TEST_CASE("forward corrected relu stays in the stability band") {
  for (double p : {1.0, 0.6}) {
    auto r = propagate_forward(
        base_config(PropagationDirection::Forward, "hypersphere_fwd", p));
    REQUIRE(!r.exploded);
    REQUIRE(r.layer_variance.size() == 20);
    CHECK(r.layer_variance.back() > 0.5);
    CHECK(r.layer_variance.back() < 2.0);
  }
}

TEST_CASE("he with dropout explodes at the 1/p rate") {
  auto r = propagate_forward(
      base_config(PropagationDirection::Forward, "he", 0.6));
  REQUIRE(!r.exploded);
  CHECK(r.layer_variance.back() > 100.0);
  double ratio = fitted_growth_ratio(r, 5, 15);
  CHECK(std::abs(ratio - 1.0 / 0.6) < 0.15 * (1.0 / 0.6));
}

TEST_CASE("xavier with relu decays") {
  auto r = propagate_forward(
      base_config(PropagationDirection::Forward, "xavier", 1.0));
  REQUIRE(!r.exploded);
  CHECK(r.layer_variance.back() < 0.1);
}

TEST_CASE("backward corrected relu is stable") {
  for (double p : {1.0, 0.6}) {
    auto r = propagate_backward(
        base_config(PropagationDirection::Backward, "hypersphere_bwd", p));
    REQUIRE(!r.exploded);
    double ratio = r.layer_variance.front() / r.layer_variance.back();
    CHECK(ratio > 0.25);
    CHECK(ratio < 4.0);
  }
}

TEST_CASE("orthonormal identity backward preserves variance exactly") {
  PropagationConfig cfg =
      base_config(PropagationDirection::Backward, "orthonormal_fwdbwd", 1.0);
  cfg.widths.assign(20, 300);
  cfg.activation = ActivationKind::identity();
  cfg.initializer.correction = InitCorrection::Backward;
  auto r = propagate_backward(cfg);
  REQUIRE(!r.exploded);
  for (double v : r.layer_variance)
    CHECK(std::abs(v / r.layer_variance.back() - 1.0) < 1e-10);
}

TEST_CASE("histogram counts sum to kept entries") {
  auto r = propagate_backward(
      base_config(PropagationDirection::Backward, "hypersphere_bwd", 0.6));
  REQUIRE(r.histograms.size() == 20);
  for (const LayerHistogram& h : r.histograms) {
    long total = 0;
    for (long c : h.counts) total += c;
    CHECK(total == h.kept);
    // dropout and relu' zero a large share of entries in this setup
    CHECK(h.kept < 256L * 500L);
    CHECK(h.kept > 0);
  }
}

TEST_CASE("export and re-parse round trip") {
  namespace fs = std::filesystem;
  auto cfg = base_config(PropagationDirection::Forward, "hypersphere_fwd", 0.6);
  cfg.depth = 6;
  cfg.widths.assign(6, 100);
  cfg.batch = 64;
  auto r = propagate_forward(cfg);
  fs::path dir = fs::temp_directory_path() / "varinit_varprop_test";
  export_report(r, dir.string(), "t");

  std::ifstream in(dir / "t_variance.csv");
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "layer,variance");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    int layer;
    char comma;
    double var;
    ls >> layer >> comma >> var;
    CHECK(layer == rows + 1);
    CHECK(var == r.layer_variance[static_cast<std::size_t>(rows)]);
    ++rows;
  }
  CHECK(rows == 6);
  for (int l = 1; l <= 6; ++l)
    CHECK(fs::exists(dir / ("t_hist_layer" + std::to_string(l) + ".csv")));
}

TEST_CASE("config validation") {
  PropagationConfig cfg;
  cfg.depth = 3;
  cfg.widths = {10, 10};  // wrong length
  CHECK_THROWS_AS(cfg.validate(), InvalidSpecError);
  cfg.widths = {10, 10, 10};
  cfg.keep_prob = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidSpecError);
}
