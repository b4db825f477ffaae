#include "varinit/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "varinit/checkpoint.hpp"

namespace varinit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

using Section = std::map<std::string, std::string>;

std::map<std::string, Section> parse_sections(const std::string& text) {
  std::map<std::string, Section> out;
  std::string section = "experiment";
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("config: expected key = value, got: " + line);
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

const std::string* lookup(const std::map<std::string, Section>& cfg,
                          const std::string& section, const std::string& key) {
  auto s = cfg.find(section);
  if (s == cfg.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  return &k->second;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw FormatError("config: bad boolean: " + v);
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  auto cfg = parse_sections(text);
  ExperimentConfig out;

  if (auto* v = lookup(cfg, "experiment", "name")) out.name = *v;
  if (auto* v = lookup(cfg, "experiment", "epochs")) out.epochs = std::stol(*v);
  if (auto* v = lookup(cfg, "experiment", "batch_size"))
    out.batch_size = std::stol(*v);
  if (auto* v = lookup(cfg, "experiment", "out_dir")) out.out_dir = *v;
  if (auto* v = lookup(cfg, "experiment", "seeds")) {
    out.seeds.clear();
    for (const auto& tok : split_ws(*v)) out.seeds.push_back(std::stoull(tok));
  }
  if (out.seeds.empty()) throw InvalidSpecError("config: seeds is empty");

  if (auto* v = lookup(cfg, "data", "source")) out.data.source = *v;
  if (auto* v = lookup(cfg, "data", "dir")) out.data.dir = *v;
  if (auto* v = lookup(cfg, "data", "subset")) out.data.subset = std::stol(*v);
  if (auto* v = lookup(cfg, "data", "holdout"))
    out.data.holdout = std::stol(*v);
  if (auto* v = lookup(cfg, "data", "standardize"))
    out.data.standardize_inputs = parse_bool(*v);
  if (auto* v = lookup(cfg, "data", "toy_seed"))
    out.data.toy_seed = std::stoull(*v);
  if (auto* v = lookup(cfg, "data", "toy_size"))
    out.data.toy_size = std::stol(*v);

  if (auto* v = lookup(cfg, "model", "input")) out.model.input = std::stol(*v);
  if (auto* v = lookup(cfg, "model", "classes"))
    out.model.classes = std::stoi(*v);
  if (auto* v = lookup(cfg, "model", "hidden")) {
    out.model.hidden.clear();
    for (const auto& tok : split_ws(*v))
      out.model.hidden.push_back(std::stol(tok));
  }
  if (auto* v = lookup(cfg, "model", "activation"))
    out.model.activation = parse_activation(*v);
  if (auto* v = lookup(cfg, "model", "keep_prob"))
    out.model.keep_prob = std::stod(*v);
  if (auto* v = lookup(cfg, "model", "batchnorm"))
    out.model.batchnorm = parse_bool(*v);
  if (auto* v = lookup(cfg, "model", "bn_momentum"))
    out.model.bn_momentum = std::stod(*v);
  if (auto* v = lookup(cfg, "model", "bn_epsilon"))
    out.model.bn_epsilon = std::stod(*v);
  if (auto* v = lookup(cfg, "model", "initializer")) out.model.initializer = *v;
  if (auto* v = lookup(cfg, "model", "first_layer_identity"))
    out.model.first_layer_identity = parse_bool(*v);

  if (auto* v = lookup(cfg, "optimizer", "optimizer"))
    out.optimizer.kind = parse_optimizer(*v);
  if (auto* v = lookup(cfg, "optimizer", "momentum"))
    out.optimizer.momentum = std::stod(*v);
  if (auto* v = lookup(cfg, "optimizer", "weight_decay"))
    out.optimizer.weight_decay = std::stod(*v);
  if (auto* v = lookup(cfg, "optimizer", "momentum_reset_every"))
    out.optimizer.momentum_reset_every = std::stol(*v);
  if (auto* v = lookup(cfg, "optimizer", "lr")) {
    out.lrs.clear();
    out.lrs.push_back(std::stod(*v));
  }
  if (auto* v = lookup(cfg, "optimizer", "lrs")) {
    out.lrs.clear();
    for (const auto& tok : split_ws(*v)) out.lrs.push_back(std::stod(tok));
  }
  if (auto* v = lookup(cfg, "optimizer", "lr_milestones")) {
    out.schedule.milestones.clear();
    for (const auto& tok : split_ws(*v))
      out.schedule.milestones.push_back(std::stol(tok));
  }
  if (auto* v = lookup(cfg, "optimizer", "lr_decay"))
    out.schedule.decay_factor = std::stod(*v);
  if (out.lrs.empty()) throw InvalidSpecError("config: empty lr grid");
  return out;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config_text(buf.str());
}

Network build_mlp(const ModelConfig& cfg, RandomSource& rng) {
  Network net;
  InitializerSpec spec = named_initializer(cfg.initializer);
  spec.keep_prob = cfg.keep_prob;
  spec.activation_in = cfg.activation;
  spec.activation_out = cfg.activation;

  Eigen::Index prev = cfg.input;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    Eigen::Index width = cfg.hidden[i];
    InitializerSpec layer_spec = spec;
    if (i == 0 && cfg.first_layer_identity)
      layer_spec.activation_in = ActivationKind::identity();
    auto dense = std::make_unique<DenseLayer>(prev, width);
    dense->weights() = build_dense_weights(layer_spec, rng, prev, width);
    net.add(std::move(dense));
    if (cfg.batchnorm)
      net.add(std::make_unique<BatchNormLayer>(width, 0, cfg.bn_momentum,
                                               cfg.bn_epsilon));
    net.add(std::make_unique<ActivationLayer>(cfg.activation));
    if (cfg.keep_prob < 1.0)
      net.add(std::make_unique<DropoutLayer>(cfg.keep_prob));
    prev = width;
  }
  // Output layer: no activation follows, so the backward factor uses
  // identity and no dropout feeds it forward.
  InitializerSpec out_spec = spec;
  out_spec.activation_out = ActivationKind::identity();
  auto dense = std::make_unique<DenseLayer>(prev, cfg.classes);
  dense->weights() = build_dense_weights(out_spec, rng, prev, cfg.classes);
  net.add(std::move(dense));
  return net;
}

LoadedData load_experiment_data(const DataConfig& cfg) {
  LoadedData out;
  Dataset train, test;
  if (cfg.source == "toy") {
    Dataset all = toy_mnist(cfg.toy_size, cfg.toy_seed);
    Eigen::Index test_n = std::max<Eigen::Index>(all.size() / 6, 1);
    train = subset(all, all.size() - test_n);
    test.split = Split::Test;
    test.classes = all.classes;
    test.images = all.images.bottomRows(test_n);
    test.labels.assign(all.labels.end() - test_n, all.labels.end());
  } else if (cfg.source == "mnist") {
    auto [tr, te] = load_mnist_idx(cfg.dir);
    train = std::move(tr);
    test = std::move(te);
  } else if (cfg.source == "cifar10") {
    auto [tr, te] = load_cifar10_binary(cfg.dir);
    train = std::move(tr);
    test = std::move(te);
  } else {
    throw InvalidSpecError("unknown data source: " + cfg.source);
  }
  if (cfg.subset > 0) train = subset(train, cfg.subset);
  auto [tr, val] = split_holdout(train, cfg.holdout, /*seed=*/9);
  out.train = std::move(tr);
  out.val = std::move(val);
  out.test = std::move(test);
  if (cfg.standardize_inputs) {
    FeatureStats stats = compute_stats(out.train);
    out.train = standardize(out.train, stats);
    out.val = standardize(out.val, stats);
    out.test = standardize(out.test, stats);
  }
  return out;
}

namespace {

double train_epoch_loss(Network& net, const LoadedData& data,
                        const ExperimentConfig& cfg, OptimizerState& opt,
                        double lr, RandomSource& rng, std::uint64_t order_seed) {
  double loss_sum = 0.0;
  Eigen::Index seen = 0;
  for (const Batch& b : batches(data.train, cfg.batch_size, true, order_seed)) {
    Matrix logits = net.forward(b.images, Mode::Train, &rng);
    LossResult lr_res = softmax_cross_entropy(logits, b.labels);
    if (!std::isfinite(lr_res.loss))
      throw ContractError("training loss diverged");
    net.backward(lr_res.dlogits);
    opt.step(net.params(), net.grads(), lr, net.param_names());
    loss_sum += lr_res.loss * static_cast<double>(b.images.rows());
    seen += b.images.rows();
  }
  return loss_sum / static_cast<double>(seen);
}

std::string lr_tag(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lr);
  std::string s = buf;
  for (char& c : s)
    if (c == '.' || c == '-' || c == '+') c = '_';
  return s;
}

}  // namespace

CellResult train_cell(const ExperimentConfig& cfg, const LoadedData& data,
                      std::uint64_t seed, double lr, bool write_artifacts) {
  namespace fs = std::filesystem;
  CellResult result;
  result.seed = seed;
  result.lr = lr;

  RandomSource rng(seed);
  Network net = build_mlp(cfg.model, rng);
  OptimizerState opt(cfg.optimizer, net.params());
  LrSchedule sched = cfg.schedule;
  sched.base_lr = lr;

  std::ofstream csv;
  if (write_artifacts) {
    fs::create_directories(cfg.out_dir);
    result.metrics_path = cfg.out_dir + "/metrics_seed" +
                          std::to_string(seed) + "_lr" + lr_tag(lr) + ".csv";
    csv.open(result.metrics_path);
    if (!csv) throw IoError("cannot open " + result.metrics_path);
    csv << "# varinit-metrics v1\n";
    csv << "seed,epoch,lr,train_loss,val_loss,test_loss,test_error,"
           "wall_seconds\n";
  }

  const long half_epoch = (cfg.epochs + 1) / 2;
  auto t0 = std::chrono::steady_clock::now();
  try {
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
      if (cfg.optimizer.momentum_reset_every > 0 && epoch > 0 &&
          epoch % cfg.optimizer.momentum_reset_every == 0)
        opt.reset_momentum();
      double epoch_lr = lr_at(sched, epoch);
      std::uint64_t order_seed = seed * 1000003ULL + static_cast<std::uint64_t>(epoch);
      double train_loss =
          train_epoch_loss(net, data, cfg, opt, epoch_lr, rng, order_seed);
      EvalResult val = evaluate(net, data.val);
      EvalResult test = evaluate(net, data.test);
      double wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      result.final_train_loss = train_loss;
      result.final_val_loss = val.loss;
      result.final_test_loss = test.loss;
      result.final_test_error = test.error_rate;
      if (write_artifacts) {
        char row[256];
        std::snprintf(row, sizeof row, "%llu,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                      static_cast<unsigned long long>(seed), epoch + 1,
                      epoch_lr, train_loss, val.loss, test.loss,
                      test.error_rate, wall);
        csv << row;
        if (epoch + 1 == half_epoch) {
          result.half_checkpoint = cfg.out_dir + "/ckpt_seed" +
                                   std::to_string(seed) + "_lr" + lr_tag(lr) +
                                   "_half.ckpt";
          save_checkpoint(net, result.half_checkpoint);
        }
      }
    }
    if (write_artifacts) {
      result.final_checkpoint = cfg.out_dir + "/ckpt_seed" +
                                std::to_string(seed) + "_lr" + lr_tag(lr) +
                                "_final.ckpt";
      save_checkpoint(net, result.final_checkpoint);
    }
  } catch (const ContractError& e) {
    result.diverged = true;
    if (write_artifacts) csv << "# diverged: " << e.what() << "\n";
  }
  return result;
}

std::vector<CellResult> run_train(const ExperimentConfig& cfg) {
  LoadedData data = load_experiment_data(cfg.data);
  std::vector<CellResult> results;
  for (std::uint64_t seed : cfg.seeds)
    for (double lr : cfg.lrs)
      results.push_back(train_cell(cfg, data, seed, lr, true));
  return results;
}

}  // namespace varinit
