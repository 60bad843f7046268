#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "bsde/regression.hpp"
#include "bsde/scalar_solver.hpp"
#include "bsde/scenario.hpp"

namespace bsde {

/// One inequality lhs <= rhs checked with Monte Carlo slack:
/// pass iff lhs <= rhs + sigmas * sqrt(lhs_stderr^2 + rhs_stderr^2).
struct EstimateReport {
  std::string check;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  double lhs_stderr = 0.0;
  double rhs_stderr = 0.0;
  double sigmas = 3.0;
  bool pass = true;
  /// Reported value only, no pass/fail semantics (constants the theory leaves unspecified).
  bool informational = false;
  std::vector<std::string> warnings;
  std::map<std::string, double> details;
};

EstimateReport make_inequality_report(std::string check, double lhs, double rhs,
                                      double lhs_stderr, double rhs_stderr, double sigmas = 3.0);

/// min Y over nodes and paths; pass iff strictly positive. Floor clamps add a warning.
EstimateReport check_positivity(const BsdeSolutionGrid& sol);
EstimateReport check_positivity(std::span<const BsdeSolutionGrid> components);

/// At t = 0:  Y_0^{2+delta} <= E[e^{(1+delta)T + (2+delta) int_0^T b} zeta^{2+delta}
///                                 + int_0^T e^{(1+delta)s + (2+delta) int_0^s b} a^{2+delta} ds],
/// with the envelope (a, b, delta) taken from `envelope` and left-endpoint sums for integrals.
/// With a basis, interior nodes are spot-checked through regressed conditional means
/// (recorded in details, not part of pass). Throws DomainError if Y is not positive.
EstimateReport check_moment_bound(const BsdeSolutionGrid& sol, const ScalarDriver& envelope,
                                  const ScenarioBatch& batch, std::span<const double> terminal,
                                  const RegressionBasis* basis = nullptr, double sigmas = 3.0);

/// E[(int |Z|^2)^{p/2}] / (1 + E[sup Y^{p(2+delta)} + (int a)^p + (int b)^p]). Informational.
/// Throws ConfigError if delta == 1.
EstimateReport check_z_moment_ratio(const BsdeSolutionGrid& sol, const ScalarDriver& envelope,
                                    const ScenarioBatch& batch, double p);

/// Flags growth of the Z-moment ratio across a refinement sequence: fails when the last ratio
/// exceeds the first by more than `growth_limit` (relative), with an absolute floor for
/// ratios that are numerically zero.
EstimateReport check_ratio_refinement(std::span<const double> ratios, double growth_limit = 0.5,
                                      double zero_floor = 1e-8);

/// Y_0 >= mean(terminal) - sigmas * stderr. Valid for nonnegative drivers.
EstimateReport check_terminal_lower_bound(const BsdeSolutionGrid& sol,
                                          std::span<const double> terminal, double sigmas = 3.0);

/// value >= floor - sigmas * value_stderr.
EstimateReport check_value_floor(std::string check, double value, double value_stderr,
                                 double floor, double sigmas = 3.0);

/// sup over nodes and paths of |Y| (bounded-data diagnostic). Informational.
EstimateReport y_sup_norm(std::span<const BsdeSolutionGrid> components);

}  // namespace bsde
