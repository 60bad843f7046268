#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsde/coefficients.hpp"
#include "bsde/estimates.hpp"
#include "bsde/model.hpp"
#include "bsde/oracles.hpp"
#include "bsde/picard.hpp"
#include "bsde/portfolio.hpp"
#include "bsde/scalar_solver.hpp"

namespace bsde {

nlohmann::json to_json(const ValidationReport& report);
nlohmann::json to_json(const NondegeneracyReport& report);
nlohmann::json to_json(const EstimateReport& report);
nlohmann::json to_json(const PicardReport& report);
nlohmann::json to_json(const ContractionHorizon& horizon);
nlohmann::json to_json(const VerificationReport& report);

/// Column-oriented table written as comma-separated text with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  /// Numbers are written with 17 significant digits.
  CsvTable& row(std::vector<std::string> cells);
  static std::string num(double value);

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  void write(const std::filesystem::path& file) const;
  static CsvTable read(const std::filesystem::path& file);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

void write_json(const nlohmann::json& doc, const std::filesystem::path& file);
nlohmann::json read_json(const std::filesystem::path& file);

/// One row per (node, path): node, t, path, Y, Z_1..Z_d (Z is empty at the last node).
void write_solution_csv(const BsdeSolutionGrid& sol, const std::filesystem::path& file);
/// Per-step regression coefficients of a solve.
nlohmann::json coefficients_json(const BsdeSolutionGrid& sol);

/// Fixed-width text table of a verification report.
std::string format_verification_table(const VerificationReport& report);

}  // namespace bsde
