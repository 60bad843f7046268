#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsde/regression.hpp"
#include "bsde/scenario.hpp"
#include "bsde/time_grid.hpp"

namespace bsde {

struct DriverContext {
  double t = 0.0;
  std::size_t node = 0;
  std::size_t path = 0;
  std::size_t regime = 0;
};

using DriverFn = std::function<double(const DriverContext&, double y, std::span<const double> z)>;
using DriverProcessFn = std::function<double(const DriverContext&)>;

/// One-dimensional driver g(t, y, z) with envelope 0 <= g <= a + b y + delta / (2y) |z|^2.
/// Envelope processes may depend on the path (e.g. a frozen coupling term); empty means zero.
struct ScalarDriver {
  DriverFn g;
  DriverProcessFn a;
  DriverProcessFn b;
  double delta = 0.0;

  double a_at(const DriverContext& ctx) const { return a ? a(ctx) : 0.0; }
  double b_at(const DriverContext& ctx) const { return b ? b(ctx) : 0.0; }
};

/// Driver of (u, v) = (ln Y, Z / Y):  g~(t, u, v) = g(t, e^u, e^u v) e^{-u} + |v|^2 / 2.
/// The envelope is not carried over.
ScalarDriver log_transform_driver(const ScalarDriver& driver);

enum class PositivityMode { LogTransform, Floor };

std::string to_string(PositivityMode mode);
PositivityMode positivity_mode_from_string(const std::string& name);

struct SolveOptions {
  PositivityMode mode = PositivityMode::LogTransform;
  double floor = 1e-8;
  double inner_tolerance = 1e-12;
  int inner_max_iterations = 50;
};

/// Regression coefficients of one backward step: the conditional mean of the regressed state
/// (ln Y in log mode, Y in floor mode) and one vector per Brownian coordinate for Z (or Z / Y).
struct StepCoefficients {
  std::size_t node = 0;
  Eigen::VectorXd state;
  std::vector<Eigen::VectorXd> z;
  double ridge = 0.0;
};

struct BsdeSolutionGrid {
  TimeGrid grid{1.0, 1};
  std::size_t paths = 0;
  std::size_t dim = 0;
  std::vector<double> y;  // nodes x paths
  std::vector<double> z;  // steps x paths x d
  std::vector<StepCoefficients> coefficients;  // indexed by node, 0..N-1
  SolveOptions options;
  std::size_t clamp_events = 0;
  int max_inner_iterations = 0;
  /// Monte Carlo standard error of Y_0 (sample standard deviation of Y_{t_1} over sqrt(M)).
  double y0_stderr = 0.0;

  double y_at(std::size_t node, std::size_t path) const { return y[node * paths + path]; }
  std::span<const double> z_at(std::size_t step, std::size_t path) const {
    return {z.data() + (step * paths + path) * dim, dim};
  }
  /// Y_0; identical on every path.
  double y0() const { return y[0]; }

  static BsdeSolutionGrid filled(const TimeGrid& grid, std::size_t paths, std::size_t dim,
                                 double y_value, double z_value);
};

/// Backward least-squares Monte Carlo for Y_t = zeta + int_t^T g ds - int_t^T Z dW:
///   Z_i = E_i[(Y_{i+1} - E_i[Y_{i+1}]) dW_i'] / dt,  Y_i = E_i[Y_{i+1}] + g(t_i, Y_i, Z_i) dt,
/// implicit in y (fixed point, Newton when that map does not contract) and explicit in z. In log mode the same scheme runs on ln Y.
/// Throws DomainError if zeta is not strictly positive, NumericalError if a step fails.
BsdeSolutionGrid solve_scalar_bsde(const ScalarDriver& driver, std::span<const double> terminal,
                                   const ScenarioBatch& batch, const RegressionBasis& basis,
                                   const SolveOptions& options = {});

}  // namespace bsde
