#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "lrkb/common.hpp"
#include "lrkb/systems.hpp"

namespace lrkb {

/// Everything a CLI command reads from a scenario file. See docs/formats.md.
struct ScenarioConfig {
  LtiSystem system;
  bool has_system = false;
  /// Empty means "auto": the smallest admissible rank from minimal_rank.
  std::optional<int> rank;
  double epsilon = 1.0;
  std::optional<double> dt;  // Oja step, default 0.05 epsilon / ||A||_2
  double dt_sim = 1e-3;
  double t_max = 10.0;
  std::optional<double> oja_t_max;
  std::uint64_t seed = 0;
  std::size_t n_paths = 1000;
  std::string output_dir = "out";
  std::optional<Vector> x0;            // mean of x(0), default 0
  std::optional<Matrix> initial_cov;   // covariance of x(0), default I
  std::optional<Matrix> r0;            // default U^T initial_cov U
  long record_stride = 0;
  double unstable_threshold = 0.0;
  bool co_integrate_oja = false;
  unsigned threads = 0;
  int verify_systems = 20;
  double tol_scale = 1.0;
};

/// Parses scenario JSON. Relative system paths resolve against base_dir.
/// Throws ConfigError carrying "origin:line:column" for syntax errors and
/// the offending field name for semantic ones.
ScenarioConfig parse_scenario(const std::string& text, const std::string& origin,
                              const std::filesystem::path& base_dir);
ScenarioConfig load_scenario(const std::filesystem::path& path);

}  // namespace lrkb
