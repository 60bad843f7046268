#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsde/portfolio.hpp"
#include "bsde/scalar_solver.hpp"

namespace bsde {

enum class Pipeline { Validate, Simulate, Solve, VerifyBounds, Portfolio, OracleCompare };

std::string to_string(Pipeline pipeline);
/// Throws ConfigError("pipeline", ...) for unknown names.
Pipeline pipeline_from_string(const std::string& name);

struct SolverConfig {
  PositivityMode mode = PositivityMode::LogTransform;
  double tolerance = 1e-4;
  std::size_t max_iterations = 50;
  unsigned basis_degree = 2;
  double floor = 1e-8;
  double inner_tolerance = 1e-12;
  int inner_max_iterations = 50;

  SolveOptions solve_options() const;
};

struct VerificationConfig {
  std::size_t paths = 100000;
  std::vector<double> scales{0.0, 0.5, 0.8, 1.2, 1.5};
  bool constant_strategy = true;
  std::string strategy_file;  // optional CSV, relative to the config file
  double sigmas = 3.0;
};

struct ExperimentConfig {
  std::string name;
  Pipeline pipeline = Pipeline::Solve;
  std::uint64_t seed = 1;
  std::size_t paths = 10000;
  std::size_t steps = 50;
  unsigned threads = 1;
  MarketSpec market;  // market.horizon is the top-level "horizon"
  SolverConfig solver;
  double integrability_p = 2.0;
  double integrability_q = 2.0;
  VerificationConfig verification;
  std::size_t oracle_steps = 1000;
  std::string output = "out";
  /// Also write per-path solution grids (node, path, Y, Z) in the solve pipeline.
  bool save_solution = false;
  /// Directory of the file the config was read from; resolves relative paths.
  std::filesystem::path base_dir;
};

/// Parses and validates; unknown keys and bad values throw ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& file);
nlohmann::json to_json(const ExperimentConfig& config);

/// Field-by-field equality of the in-memory specification (base_dir excluded).
bool equivalent(const ExperimentConfig& a, const ExperimentConfig& b);

/// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const ExperimentConfig& config);

}  // namespace bsde
