#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bsde/scenario.hpp"
#include "bsde/time_grid.hpp"

namespace bsde {

/// Y_t = zeta^gamma exp(gamma |lambda|^2 (T - t) / (2 (1 - gamma))): the single-regime,
/// deterministic-coefficient value process.
double merton_closed_form(double gamma, double lambda_sq, double horizon, double t, double zeta);

using LambdaSqFn = std::function<double(double t, std::size_t regime)>;

struct OdeSolution {
  std::vector<double> nodes;
  std::vector<Eigen::VectorXd> values;  // Y(t_i) in R^k
  int order = 4;
  std::size_t steps = 0;  // RK4 steps over [0, T]
  double halving_change = 0.0;
};

/// With deterministic coefficients Z = 0 and the system reduces to
///   dY^l/dt = -(gamma / (2(1-gamma))) |lambda(t,l)|^2 Y^l - sum_j q^{lj} Y^j,  Y(T) = xi,
/// integrated backward with classical RK4 using at least `min_steps` steps. The result is
/// compared against twice as many steps; a disagreement above 1e-6 throws NumericalError.
OdeSolution ode_oracle(const ChainGenerator& generator, const LambdaSqFn& lambda_sq, double gamma,
                       const Eigen::VectorXd& terminal, const TimeGrid& grid,
                       std::size_t min_steps = 1000);

}  // namespace bsde
