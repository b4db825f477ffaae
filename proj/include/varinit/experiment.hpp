#pragma once

#include <map>
#include <string>
#include <vector>

#include "varinit/bn_reestimate.hpp"
#include "varinit/data.hpp"
#include "varinit/init.hpp"
#include "varinit/layers.hpp"
#include "varinit/optim.hpp"

namespace varinit {

struct ModelConfig {
  Eigen::Index input = 784;
  int classes = 10;
  std::vector<Eigen::Index> hidden;   // dense widths before the output layer
  ActivationKind activation = ActivationKind::relu();
  double keep_prob = 1.0;
  bool batchnorm = false;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;
  std::string initializer = "hypersphere_fwdbwd";
  bool first_layer_identity = true;  // input acts as an identity activation
};

struct DataConfig {
  std::string source = "toy";  // toy | mnist | cifar10
  std::string dir;             // for mnist/cifar10
  Eigen::Index subset = 0;     // 0 = all
  Eigen::Index holdout = 5000;
  bool standardize_inputs = true;
  std::uint64_t toy_seed = 42;
  Eigen::Index toy_size = 12000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  long epochs = 5;
  Eigen::Index batch_size = 64;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";
  ModelConfig model;
  DataConfig data;
  OptimizerConfig optimizer;
  std::vector<double> lrs{1e-3};
  LrSchedule schedule;  // base_lr filled per grid cell
};

/// Plain-text key = value config with [section] headers; '#' comments.
ExperimentConfig parse_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config_text(const std::string& text);

/// Hidden blocks are dense -> (batchnorm) -> activation -> dropout; the
/// output layer is a bare dense. Weights come from the named initializer
/// with the model's activation on both sides (identity on the first layer's
/// input when first_layer_identity is set). Biases start at zero.
Network build_mlp(const ModelConfig& cfg, RandomSource& rng);

struct LoadedData {
  Dataset train, val, test;
};
LoadedData load_experiment_data(const DataConfig& cfg);

struct CellResult {
  std::uint64_t seed = 0;
  double lr = 0.0;
  bool diverged = false;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double final_test_loss = 0.0;
  double final_test_error = 0.0;
  std::string metrics_path;
  std::string half_checkpoint;
  std::string final_checkpoint;
};

/// One CSV and two checkpoints (halfway, final) per (seed, lr) grid cell.
/// A diverging cell is recorded and skipped; the rest of the grid runs.
std::vector<CellResult> run_train(const ExperimentConfig& cfg);

/// Same grid cell training against preloaded data; used by run_train and by
/// the benchmark scenarios.
CellResult train_cell(const ExperimentConfig& cfg, const LoadedData& data,
                      std::uint64_t seed, double lr, bool write_artifacts);

}  // namespace varinit
