#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lrkb/common.hpp"

namespace lrkb {

/// Matrices and scalars that reproduce one failed check.
struct Witness {
  std::string label;
  std::vector<std::pair<std::string, Matrix>> matrices;
  std::vector<std::pair<std::string, double>> scalars;
};

struct SuiteResult {
  std::string name;
  std::string description;
  bool passed = true;
  long checks = 0;
  long failures = 0;
  /// Largest observed value of the suite's primary metric and the bound it
  /// was held to (after tol_scale).
  double worst = 0.0;
  double tolerance = 0.0;
  std::string message;  // first failure
  std::vector<Witness> witnesses;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Multiplies every tolerance. Zero makes every quantitative check fail.
  double tol_scale = 1.0;
  /// Random systems per ensemble-based suite.
  int systems = 20;
  /// At most this many witnesses are kept per suite.
  std::size_t max_witnesses = 3;
};

/// Suite names in execution order.
const std::vector<std::string>& suite_names();
std::string suite_description(const std::string& name);

/// Runs one suite. Throws ConfigError for an unknown name.
SuiteResult run_suite(const std::string& name, const VerifyOptions& options);

}  // namespace lrkb
