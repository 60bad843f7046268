#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bsde/config.hpp"
#include "bsde/errors.hpp"
#include "bsde/picard.hpp"
#include "bsde/portfolio.hpp"
#include "bsde/regression.hpp"
#include "bsde/scenario.hpp"

namespace bsde {

/// A run directory lacks a file the manifest or a consumer expects (CLI exit code 4).
class MissingOutputError : public Error {
 public:
  using Error::Error;
};

/// Plain-text key=value record of a run, in insertion order.
class ExperimentManifest {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value, int precision = 12);
  /// Empty string when the key is absent.
  std::string get(const std::string& key) const;
  bool has(const std::string& key) const;
  void add_output(const std::string& file);

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }

  void write(const std::filesystem::path& file) const;
  /// Throws MissingOutputError if the file does not exist.
  static ExperimentManifest read(const std::filesystem::path& file);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> outputs_;
};

/// Y_0 as written to the manifest and printed by the CLI.
std::string format_y0(double value);

/// The transformed regime-switching system solved by Picard iteration on one batch,
/// with the untransformed solution alongside.
struct SolvedMarket {
  TransformedSystem system;
  ScenarioBatch batch;
  RegressionBasis basis;
  PicardResult transformed;
  std::vector<BsdeSolutionGrid> solution;
  double wall_time_ms = 0.0;
};

ScenarioBatch simulate_market_batch(const ExperimentConfig& config, std::size_t paths);
SolvedMarket solve_market(const ExperimentConfig& config, ScenarioBatch batch);
SolvedMarket solve_market(const ExperimentConfig& config, std::size_t paths);

/// Runs the configured pipeline and writes its outputs plus manifest.txt into `out_dir`.
/// Throws ConfigError (invalid input) or NumericalError (solver failure).
ExperimentManifest run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Derives plotting tables (plot_*.csv) from a completed run directory and returns their names.
/// Throws MissingOutputError when the manifest or one of its outputs is absent.
std::vector<std::string> emit_plot_data(const std::filesystem::path& run_dir);

}  // namespace bsde
