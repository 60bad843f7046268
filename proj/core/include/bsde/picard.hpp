#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "bsde/model.hpp"
#include "bsde/regression.hpp"
#include "bsde/scalar_solver.hpp"

namespace bsde {

/// Theoretical contraction horizon epsilon and the integer m0 with T/eps <= m0 < T/eps + 1.
struct ContractionHorizon {
  double epsilon = std::numeric_limits<double>::infinity();
  long long m0 = 1;
};

/// eps = 1 / ((p/(p-1)) 3^{(p-1)/p} 2^{1+delta+1/p} A^{2+delta} n^{(2+delta)/2}).
/// A = 0 gives (infinity, 1). Throws ConfigError for p <= 1, delta < 0, delta == 1 or A < 0.
ContractionHorizon contraction_horizon(double lipschitz, double p, double delta, std::size_t n,
                                       double horizon);

struct IterationDelta {
  double y_sup = 0.0;  // max over components, nodes and paths of |y' - y|
  double z_l2 = 0.0;   // root mean square of |z' - z| over components, nodes and paths
};

/// Throws InternalError on mismatched shapes.
IterationDelta iteration_delta(std::span<const BsdeSolutionGrid> prev,
                               std::span<const BsdeSolutionGrid> next);

struct PicardIterationRecord {
  std::size_t iteration = 0;  // 1-based sweep index
  double delta_y = 0.0;
  double delta_z = 0.0;
  double wall_time_ms = 0.0;
};

struct PicardReport {
  std::vector<PicardIterationRecord> history;
  bool converged = false;
  double tolerance = 0.0;
  ContractionHorizon horizon;
  /// Engineering heuristic: observed sweeps <= 10 m0 (m0 is a proof constant, not a sharp count).
  bool within_heuristic_bound = true;

  std::size_t iterations() const { return history.size(); }
  /// Geometric ratio fitted by least squares on log(delta) over the last `window` sweeps
  /// with positive deltas; NaN if fewer than two are available.
  double fitted_ratio(std::size_t window = 3) const;
};

struct PicardOptions {
  double tolerance = 1e-4;
  std::size_t max_iterations = 50;
  SolveOptions solve;
  /// Exponent p passed to contraction_horizon.
  double integrability_p = 2.0;
};

struct PicardResult {
  std::vector<BsdeSolutionGrid> components;
  PicardReport report;
};

/// Initial iterate for the Picard scheme: y = 1, z = 0.
std::vector<BsdeSolutionGrid> picard_initial_iterate(const GeneratorSystemSpec& system,
                                                     const ScenarioBatch& batch);

/// The scalar driver of component i with the coupling frozen at `frozen` (evaluated pathwise
/// at the same node). The envelope is a = alpha + H_1^i(frozen), b = beta, delta.
ScalarDriver frozen_component_driver(const GeneratorSystemSpec& system, std::size_t component,
                                     std::span<const BsdeSolutionGrid> frozen);

/// Picard decoupling: starting from y = 1, z = 0, each sweep solves the n scalar BSDEs with
/// driver H_1^i(t, y^{(m)}_t) + H_2^i(t, y, z). Stops when the sup-norm delta <= tolerance.
/// Non-convergence is reported (converged == false), not thrown. A failing scalar solve
/// rethrows as NumericalError naming the component.
PicardResult picard_solve(const GeneratorSystemSpec& system, const TerminalSpec& terminal,
                          const ScenarioBatch& batch, const RegressionBasis& basis,
                          const PicardOptions& options = {});

/// Same as above, starting from a caller-supplied iterate instead of (1, 0).
PicardResult picard_solve_from(const GeneratorSystemSpec& system, const TerminalSpec& terminal,
                               const ScenarioBatch& batch, const RegressionBasis& basis,
                               std::vector<BsdeSolutionGrid> start,
                               const PicardOptions& options = {});

}  // namespace bsde
