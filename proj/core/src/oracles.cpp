#include "bsde/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
  if (std::abs(gamma - 1.0 / 3.0) < 1e-12) {
    throw ConfigError("gamma", "gamma = 1/3 gives delta = 2 gamma / (1 - gamma) = 1, which is excluded");
  }
}

OdeSolution integrate(const ChainGenerator& generator, const LambdaSqFn& lambda_sq, double gamma,
                      const Eigen::VectorXd& terminal, const TimeGrid& grid, std::size_t sub) {
  const Eigen::MatrixXd& q = generator.rates();
  const auto k = q.rows();
  const double c = gamma / (2.0 * (1.0 - gamma));
  // Right-hand side in reversed time s = T - t: dY/ds = c |lambda(t)|^2 Y + Q Y.
  const auto rhs = [&](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd out = q * y;
    for (Eigen::Index l = 0; l < k; ++l) out(l) += c * lambda_sq(t, static_cast<std::size_t>(l)) * y(l);
    return out;
  };
  OdeSolution sol;
  sol.steps = grid.steps() * sub;
  sol.nodes.assign(grid.nodes().begin(), grid.nodes().end());
  sol.values.assign(grid.node_count(), Eigen::VectorXd());
  Eigen::VectorXd y = terminal;
  sol.values[grid.steps()] = y;
  for (std::size_t i = grid.steps(); i-- > 0;) {
    const double t_hi = grid[i + 1];
    const double h = (grid[i + 1] - grid[i]) / static_cast<double>(sub);
    for (std::size_t s = 0; s < sub; ++s) {
      const double t = t_hi - static_cast<double>(s) * h;
      const Eigen::VectorXd k1 = rhs(t, y);
      const Eigen::VectorXd k2 = rhs(t - 0.5 * h, y + 0.5 * h * k1);
      const Eigen::VectorXd k3 = rhs(t - 0.5 * h, y + 0.5 * h * k2);
      const Eigen::VectorXd k4 = rhs(t - h, y + h * k3);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    sol.values[i] = y;
  }
  return sol;
}

}  // namespace

double merton_closed_form(double gamma, double lambda_sq, double horizon, double t, double zeta) {
  check_gamma(gamma);
  if (!(zeta > 0.0)) throw ConfigError("zeta", "must be positive");
  if (t == horizon) return std::pow(zeta, gamma);
  return std::pow(zeta, gamma) * std::exp(gamma * lambda_sq * (horizon - t) / (2.0 * (1.0 - gamma)));
}

OdeSolution ode_oracle(const ChainGenerator& generator, const LambdaSqFn& lambda_sq, double gamma,
                       const Eigen::VectorXd& terminal, const TimeGrid& grid,
                       std::size_t min_steps) {
  check_gamma(gamma);
  if (static_cast<std::size_t>(terminal.size()) != generator.states()) {
    throw ConfigError("terminal", "needs one value per regime");
  }
  if ((terminal.array() <= 0.0).any()) throw ConfigError("terminal", "must be positive");
  const std::size_t sub = std::max<std::size_t>(1, (min_steps + grid.steps() - 1) / grid.steps());
  OdeSolution coarse = integrate(generator, lambda_sq, gamma, terminal, grid, sub);
  const OdeSolution fine = integrate(generator, lambda_sq, gamma, terminal, grid, 2 * sub);
  double change = 0.0;
  for (std::size_t i = 0; i < coarse.values.size(); ++i) {
    change = std::max(change, (coarse.values[i] - fine.values[i]).cwiseAbs().maxCoeff());
  }
  if (change > 1e-6) {
    throw NumericalError("reference-oracles", -1,
                         "RK4 step halving changed the solution by " + std::to_string(change));
  }
  coarse.halving_change = change;
  return coarse;
}

}  // namespace bsde
