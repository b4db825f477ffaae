#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "varinit/bench.hpp"
#include "varinit/bn_reestimate.hpp"
#include "varinit/checkpoint.hpp"
#include "varinit/experiment.hpp"
#include "varinit/varprop.hpp"

namespace {

using namespace varinit;

int cmd_factors(const std::string& activation, const std::string& method) {
  ActivationKind f = parse_activation(activation);
  FactorMethod m = FactorMethod::Quadrature;
  if (method == "analytic") m = FactorMethod::Analytic;
  else if (method == "quadrature") m = FactorMethod::Quadrature;
  else if (method == "mc") m = FactorMethod::MonteCarlo;
  else throw InvalidSpecError("unknown method: " + method);
  AdjustmentFactors out = adjustment_factors(f, m);
  const char* src = out.source == FactorMethod::Analytic ? "analytic"
                    : out.source == FactorMethod::Quadrature ? "quadrature"
                                                             : "mc";
  std::printf("activation,forward,backward,method\n");
  std::printf("%s,%.17g,%.17g,%s\n", f.name().c_str(), out.forward,
              out.backward, src);
  return 0;
}

int cmd_varprop(const std::string& direction, const std::string& init,
                const std::string& activation, double keep_prob, int depth,
                std::uint64_t seed, const std::string& out_dir) {
  PropagationConfig cfg;
  if (direction == "forward") cfg.direction = PropagationDirection::Forward;
  else if (direction == "backward") cfg.direction = PropagationDirection::Backward;
  else throw InvalidSpecError("direction must be forward or backward");
  cfg.depth = depth;
  if (depth == 20) cfg.widths = PropagationConfig::default_widths();
  else cfg.widths.assign(static_cast<std::size_t>(depth), 500);
  cfg.activation = parse_activation(activation);
  cfg.keep_prob = keep_prob;
  cfg.initializer = named_initializer(init);
  cfg.seed = seed;
  VariancePropagationReport report = propagate(cfg);
  std::string prefix = direction + "_" + init + "_" + activation;
  export_report(report, out_dir, prefix);
  std::printf("wrote %s/%s_variance.csv (%zu layers%s)\n", out_dir.c_str(),
              prefix.c_str(), report.layer_variance.size(),
              report.exploded ? ", truncated at explosion" : "");
  return 0;
}

int cmd_train(const std::string& config_path) {
  ExperimentConfig cfg = parse_experiment_config(config_path);
  auto results = run_train(cfg);
  bool any_diverged = false;
  for (const auto& r : results) {
    if (r.diverged) {
      any_diverged = true;
      std::printf("seed=%llu lr=%g DIVERGED\n",
                  static_cast<unsigned long long>(r.seed), r.lr);
    } else {
      std::printf("seed=%llu lr=%g train_loss=%.6g test_loss=%.6g "
                  "test_error=%.4f\n",
                  static_cast<unsigned long long>(r.seed), r.lr,
                  r.final_train_loss, r.final_test_loss, r.final_test_error);
    }
  }
  return any_diverged ? 1 : 0;
}

Dataset cli_dataset(const std::string& data_dir, const std::string& source,
                    bool test_split) {
  DataConfig dc;
  dc.source = source;
  dc.dir = data_dir;
  LoadedData data = load_experiment_data(dc);
  return test_split ? data.test : data.train;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& source) {
  Network net = load_checkpoint(checkpoint);
  Dataset test = cli_dataset(data_dir, source, true);
  EvalResult r = evaluate(net, test);
  std::printf("loss,error\n%.17g,%.17g\n", r.loss, r.error_rate);
  return 0;
}

int cmd_bn_reestimate(const std::string& in_ckpt, const std::string& data_dir,
                      const std::string& source, const std::string& estimator,
                      bool also_means, const std::string& out_ckpt) {
  Network net = load_checkpoint(in_ckpt);
  Dataset train = cli_dataset(data_dir, source, false);
  ReEstimateConfig cfg;
  if (estimator == "exact") cfg.estimator = BnEstimator::ExactMean;
  else if (estimator == "ema") cfg.estimator = BnEstimator::Ema;
  else throw InvalidSpecError("estimator must be exact or ema");
  cfg.also_means = also_means;
  if (!reestimate(net, train, cfg))
    std::fprintf(stderr, "warning: network has no batchnorm layers; no-op\n");
  save_checkpoint(net, out_ckpt);
  std::printf("wrote %s\n", out_ckpt.c_str());
  return 0;
}

int cmd_bench(const std::string& suite) {
  return report(run_benchmark_suite(suite)) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dropout-corrected weight initialization toolkit"};
  app.require_subcommand(1);

  std::string env_data;
  if (const char* v = std::getenv("VARINIT_DATA")) env_data = v;

  auto* factors = app.add_subcommand("factors", "activation moment factors");
  std::string f_act = "relu", f_method = "quadrature";
  factors->add_option("--activation", f_act, "activation name")->required();
  factors->add_option("--method", f_method, "analytic|quadrature|mc");

  auto* vp = app.add_subcommand("varprop", "synthetic variance propagation");
  std::string v_dir = "forward", v_init = "hypersphere_fwd", v_act = "relu";
  std::string v_out = "out/varprop";
  double v_p = 1.0;
  int v_depth = 20;
  std::uint64_t v_seed = 0;
  vp->add_option("--direction", v_dir, "forward|backward");
  vp->add_option("--init", v_init, "initializer name");
  vp->add_option("--activation", v_act, "activation name");
  vp->add_option("--keep-prob", v_p, "dropout keep probability");
  vp->add_option("--depth", v_depth, "layer count");
  vp->add_option("--seed", v_seed, "rng seed");
  vp->add_option("--out", v_out, "output directory");

  auto* train = app.add_subcommand("train", "run a training experiment grid");
  std::string t_config;
  train->add_option("--config", t_config, "experiment config file")->required();

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_data = env_data, e_source = "toy";
  evalc->add_option("--checkpoint", e_ckpt)->required();
  evalc->add_option("--data-dir", e_data, "dataset root");
  evalc->add_option("--source", e_source, "toy|mnist|cifar10");

  auto* bnre = app.add_subcommand("bn-reestimate",
                                  "re-estimate batchnorm variances");
  std::string b_in, b_out, b_data = env_data, b_source = "toy";
  std::string b_estimator = "exact";
  bool b_means = false;
  bnre->add_option("--checkpoint", b_in)->required();
  bnre->add_option("--out", b_out)->required();
  bnre->add_option("--data-dir", b_data, "dataset root");
  bnre->add_option("--source", b_source, "toy|mnist|cifar10");
  bnre->add_option("--estimator", b_estimator, "exact|ema");
  bnre->add_flag("--also-means", b_means,
                 "also update running means (extension)");

  auto* bench = app.add_subcommand("bench", "acceptance benchmark suites");
  std::string s_name = "all";
  bench->add_option("suite", s_name,
                    "factors|varprop|gradcheck|mnist-init|bn-reestimate|"
                    "determinism|all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*factors) return cmd_factors(f_act, f_method);
    if (*vp) return cmd_varprop(v_dir, v_init, v_act, v_p, v_depth, v_seed, v_out);
    if (*train) return cmd_train(t_config);
    if (*evalc) return cmd_eval(e_ckpt, e_data, e_source);
    if (*bnre)
      return cmd_bn_reestimate(b_in, b_data, b_source, b_estimator, b_means,
                               b_out);
    if (*bench) return cmd_bench(s_name);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
