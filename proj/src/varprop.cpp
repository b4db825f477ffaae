#include "varinit/varprop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace varinit {

std::vector<int> PropagationConfig::default_widths() {
  std::vector<int> w(20, 500);
  for (int i = 15; i < 20; ++i) w[i] = 250;
  return w;
}

void PropagationConfig::validate() const {
  if (depth < 1) throw InvalidSpecError("varprop: depth must be positive");
  if (!widths.empty() && static_cast<int>(widths.size()) != depth)
    throw InvalidSpecError("varprop: widths length must equal depth");
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw InvalidSpecError("varprop: keep_prob must be in (0, 1]");
  if (batch < 1) throw InvalidSpecError("varprop: batch must be positive");
}

namespace {

LayerHistogram histogram_of(const Matrix& values, int bins) {
  LayerHistogram h;
  // Entries zeroed by dropout (or a hard zero activation) are excluded.
  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (values(i, j) != 0.0 && std::isfinite(values(i, j)))
        kept.push_back(values(i, j));
  h.kept = static_cast<long>(kept.size());
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (kept.empty()) {
    for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = 0.0;
    return h;
  }
  auto [lo_it, hi_it] = std::minmax_element(kept.begin(), kept.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) hi = lo + 1.0;
  for (int b = 0; b <= bins; ++b)
    h.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;
  for (double v : kept) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

struct Stack {
  std::vector<Matrix> weights;
  std::vector<Matrix> masks;         // Bernoulli(p) 0/1, one per layer input
  std::vector<Matrix> preacts;       // z^l
};

/// Shared forward sweep: dropout -> weights -> activation per layer.
Stack run_forward(const PropagationConfig& cfg,
                  const std::vector<int>& widths, RandomSource& rng,
                  VariancePropagationReport* report) {
  Stack st;
  InitializerSpec spec = cfg.initializer;
  spec.keep_prob = cfg.keep_prob;
  spec.activation_in = cfg.activation;
  spec.activation_out = cfg.activation;

  Matrix h = rng.normal_matrix(cfg.batch, widths[0]);
  for (int l = 0; l < cfg.depth; ++l) {
    Eigen::Index n_in = h.cols();
    Eigen::Index n_out = widths[static_cast<std::size_t>(l)];
    InitializerSpec layer_spec = spec;
    if (l == 0) layer_spec.activation_in = ActivationKind::identity();
    st.weights.push_back(build_dense_weights(layer_spec, rng, n_in, n_out));

    Matrix mask = Matrix::Ones(h.rows(), h.cols());
    if (cfg.keep_prob < 1.0)
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = rng.bernoulli(cfg.keep_prob) ? 1.0 : 0.0;
    st.masks.push_back(mask);

    Matrix z = (h.cwiseProduct(mask) / cfg.keep_prob) * st.weights.back();
    st.preacts.push_back(z);
    if (report) {
      if (!z.allFinite()) {
        report->exploded = true;
        report->exploded_at = l;
        return st;
      }
      report->layer_variance.push_back(variance(z));
      report->histograms.push_back(histogram_of(z, cfg.histogram_bins));
    }
    h = apply(cfg.activation, z);
  }
  return st;
}

}  // namespace

VariancePropagationReport propagate_forward(const PropagationConfig& cfg) {
  cfg.validate();
  const auto widths =
      cfg.widths.empty() ? PropagationConfig::default_widths() : cfg.widths;
  VariancePropagationReport report;
  report.config = cfg;
  RandomSource rng(cfg.seed);
  run_forward(cfg, widths, rng, &report);
  return report;
}

VariancePropagationReport propagate_backward(const PropagationConfig& cfg) {
  cfg.validate();
  const auto widths =
      cfg.widths.empty() ? PropagationConfig::default_widths() : cfg.widths;
  VariancePropagationReport report;
  report.config = cfg;
  RandomSource rng(cfg.seed);
  Stack st = run_forward(cfg, widths, rng, nullptr);

  // Masks in the recurrence carry no 1/p scaling: a dropped unit simply
  // contributes no error signal. Error signals are zero-mean by
  // construction, so the recorded "variance" is the second moment, which an
  // orthogonal weight matrix preserves exactly.
  const int depth = cfg.depth;
  std::vector<Matrix> deltas(static_cast<std::size_t>(depth));
  Matrix delta =
      rng.normal_matrix(cfg.batch, widths[static_cast<std::size_t>(depth - 1)]) *
      cfg.backward_injection_std;
  deltas[static_cast<std::size_t>(depth - 1)] = delta;
  for (int l = depth - 2; l >= 0; --l) {
    Matrix back = deltas[static_cast<std::size_t>(l + 1)] *
                  st.weights[static_cast<std::size_t>(l + 1)].transpose();
    Matrix d = back.cwiseProduct(
        derivative(cfg.activation, st.preacts[static_cast<std::size_t>(l)]));
    d = d.cwiseProduct(st.masks[static_cast<std::size_t>(l + 1)]);
    deltas[static_cast<std::size_t>(l)] = d;
  }
  for (int l = 0; l < depth; ++l) {
    const Matrix& d = deltas[static_cast<std::size_t>(l)];
    if (!d.allFinite()) {
      report.exploded = true;
      report.exploded_at = l;
      break;
    }
    report.layer_variance.push_back(d.array().square().mean());
    report.histograms.push_back(histogram_of(d, cfg.histogram_bins));
  }
  return report;
}

VariancePropagationReport propagate(const PropagationConfig& cfg) {
  return cfg.direction == PropagationDirection::Forward
             ? propagate_forward(cfg)
             : propagate_backward(cfg);
}

void export_report(const VariancePropagationReport& report,
                   const std::string& dir, const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string base = dir + "/" + prefix;
  {
    std::ofstream out(base + "_variance.csv");
    if (!out) throw IoError("cannot open " + base + "_variance.csv");
    out << "layer,variance\n";
    char buf[64];
    for (std::size_t l = 0; l < report.layer_variance.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%.17g", report.layer_variance[l]);
      out << (l + 1) << "," << buf << "\n";
    }
  }
  for (std::size_t l = 0; l < report.histograms.size(); ++l) {
    std::ofstream out(base + "_hist_layer" + std::to_string(l + 1) + ".csv");
    if (!out) throw IoError("cannot open histogram csv");
    out << "bin_lo,bin_hi,count\n";
    const LayerHistogram& h = report.histograms[l];
    char lo[64], hi[64];
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      std::snprintf(lo, sizeof lo, "%.17g", h.edges[b]);
      std::snprintf(hi, sizeof hi, "%.17g", h.edges[b + 1]);
      out << lo << "," << hi << "," << h.counts[b] << "\n";
    }
  }
}

double fitted_growth_ratio(const VariancePropagationReport& report, int lo,
                           int hi) {
  if (lo < 1 || hi <= lo ||
      static_cast<std::size_t>(hi) > report.layer_variance.size())
    throw InvalidSpecError("fitted_growth_ratio: bad layer range");
  // Least-squares slope of log(variance) against layer index.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int l = lo; l <= hi; ++l) {
    double x = l;
    double y = std::log(report.layer_variance[static_cast<std::size_t>(l - 1)]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return std::exp(slope);
}

}  // namespace varinit
