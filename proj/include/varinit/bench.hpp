#pragma once

#include <string>
#include <vector>

#include "varinit/layers.hpp"

namespace varinit {

struct CriterionResult {
  std::string name;
  bool passed = false;
  std::string detail;  // measured values
};

/// Central finite differences (h = 1e-5) against backprop on `entries`
/// random entries of every parameter tensor; returns the worst relative
/// error. Forward passes re-seed the mask rng identically so the loss is a
/// deterministic function of the parameters.
double gradient_check(Network& net, const Matrix& x,
                      const std::vector<int>& labels, std::uint64_t mask_seed,
                      int entries = 10, double h = 1e-5);

std::vector<CriterionResult> bench_factors();
std::vector<CriterionResult> bench_varprop();
std::vector<CriterionResult> bench_gradcheck();
std::vector<CriterionResult> bench_mnist_init();
std::vector<CriterionResult> bench_bn_reestimate();
std::vector<CriterionResult> bench_determinism();

/// name in {factors, varprop, gradcheck, mnist-init, bn-reestimate,
/// determinism, all}.
std::vector<CriterionResult> run_benchmark_suite(const std::string& name);

/// Prints one "PASS name: detail" / "FAIL name: detail" line per criterion;
/// returns true when all passed.
bool report(const std::vector<CriterionResult>& results);

}  // namespace varinit
