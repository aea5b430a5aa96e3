#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace dabformer::verify {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;  // measured value against its bound, or the exception text
};

using Suite = std::function<std::vector<CheckResult>()>;

// Suites by name: tensor-core, gradients, spectral, gabor, fdfa, fdagn,
// model, losses, harness, cli.
std::vector<std::string> suite_names();
std::vector<CheckResult> run_suite(const std::string& name);
std::vector<CheckResult> run_all();

// One line per check, then a suite x {pass, fail} matrix.
void print_results(const std::vector<CheckResult>& results, std::ostream& os);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace dabformer::verify
