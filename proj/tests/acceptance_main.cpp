// Acceptance suite: runs every benchmark criterion and prints one pass/fail
// line each. Exit code 0 only if all criteria pass.
#include <cstdio>

#include "varinit/bench.hpp"

int main() {
  bool ok = varinit::report(varinit::run_benchmark_suite("all"));
  std::printf(ok ? "ALL CRITERIA PASSED\n" : "SOME CRITERIA FAILED\n");
  return ok ? 0 : 1;
}
