// Runs the full acceptance suite: one [PASS]/[FAIL] line per criterion.
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <vector>

#include "stabilab/experiments.hpp"

int main() {
  std::vector<int> ids(11);
  std::iota(ids.begin(), ids.end(), 1);
  const stabilab::AcceptanceSettings settings;  // seed 20240601, parallelism 1
  const auto results = stabilab::run_acceptance(ids, settings, true);
  int failed = 0;
  for (const auto& r : results) {
    std::cout << '[' << (r.passed ? "PASS" : "FAIL") << "] criterion " << r.id << " (" << r.title
              << "): " << r.summary << '\n';
    if (!r.passed) ++failed;
  }
  std::cout << (results.size() - failed) << '/' << results.size() << " criteria passed\n";
  return failed == 0 && results.size() == 11 ? EXIT_SUCCESS : EXIT_FAILURE;
}
