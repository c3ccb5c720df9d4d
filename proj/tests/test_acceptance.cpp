#include <iostream>

#include "merge_planner/verification/acceptance.hpp"

int main() {
  merge_planner::verification::AcceptanceOptions options;
  const auto results = merge_planner::verification::run_acceptance(options, &std::cout);
  const bool ok = merge_planner::verification::all_pass(results);
  std::cout << (ok ? "acceptance: all criteria pass" : "acceptance: FAILURES") << std::endl;
  return ok ? 0 : 1;
}
