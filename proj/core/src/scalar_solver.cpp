#include "bsde/scalar_solver.hpp"

#include <algorithm>
#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

ScalarDriver log_transform_driver(const ScalarDriver& driver) {
  ScalarDriver out;
  out.g = [g = driver.g](const DriverContext& ctx, double u, std::span<const double> v) {
    const double y = std::exp(u);
    double vv = 0.0;
    // Small fixed buffer covers every Brownian dimension used in practice.
    double buf[16];
    std::vector<double> heap;
    double* z = buf;
    if (v.size() > 16) {
      heap.resize(v.size());
      z = heap.data();
    }
    for (std::size_t j = 0; j < v.size(); ++j) {
      z[j] = y * v[j];
      vv += v[j] * v[j];
    }
    const double base = g ? g(ctx, y, std::span<const double>(z, v.size())) : 0.0;
    return base / y + 0.5 * vv;
  };
  return out;
}

std::string to_string(PositivityMode mode) {
  return mode == PositivityMode::LogTransform ? "log" : "floor";
}

PositivityMode positivity_mode_from_string(const std::string& name) {
  if (name == "log" || name == "log-transform") return PositivityMode::LogTransform;
  if (name == "floor") return PositivityMode::Floor;
  throw ConfigError("solver.mode", "unknown positivity mode '" + name + "' (log | floor)");
}

BsdeSolutionGrid BsdeSolutionGrid::filled(const TimeGrid& grid, std::size_t paths,
                                          std::size_t dim, double y_value, double z_value) {
  BsdeSolutionGrid g;
  g.grid = grid;
  g.paths = paths;
  g.dim = dim;
  g.y.assign(grid.node_count() * paths, y_value);
  g.z.assign(grid.steps() * paths * dim, z_value);
  return g;
}

BsdeSolutionGrid solve_scalar_bsde(const ScalarDriver& driver, std::span<const double> terminal,
                                   const ScenarioBatch& batch, const RegressionBasis& basis,
                                   const SolveOptions& options) {
  const TimeGrid& grid = batch.grid();
  const std::size_t m = batch.paths();
  const std::size_t d = batch.brownian_dim();
  const std::size_t steps = grid.steps();
  const double dt = grid.dt();
  if (terminal.size() != m) throw InternalError("terminal sample count does not match the batch");
  for (std::size_t path = 0; path < m; ++path) {
    if (!(terminal[path] > 0.0) || !std::isfinite(terminal[path])) {
      throw DomainError("terminal value must be positive and finite (path " +
                        std::to_string(path) + ")");
    }
  }
  if (!(options.floor > 0.0)) throw ConfigError("solver.floor", "must be positive");
  if (options.inner_max_iterations < 1) {
    throw ConfigError("solver.inner_max_iterations", "must be at least 1");
  }

  const bool log_mode = options.mode == PositivityMode::LogTransform;
  const ScalarDriver step_driver = log_mode ? log_transform_driver(driver) : driver;

  BsdeSolutionGrid sol;
  sol.grid = grid;
  sol.paths = m;
  sol.dim = d;
  sol.options = options;
  sol.y.assign(grid.node_count() * m, 0.0);
  sol.z.assign(steps * m * d, 0.0);
  sol.coefficients.resize(steps);

  std::copy(terminal.begin(), terminal.end(), sol.y.begin() + static_cast<std::ptrdiff_t>(steps * m));
  std::vector<double> next(m);  // regressed state at node i+1
  for (std::size_t path = 0; path < m; ++path) {
    next[path] = log_mode ? std::log(terminal[path]) : terminal[path];
  }
  std::vector<double> current(m);
  std::vector<double> zt(m);
  std::vector<double> zrow(m * d);

  for (std::size_t step = steps; step-- > 0;) {
    const auto where = static_cast<std::ptrdiff_t>(step);
    const ConditionalExpectation cond(basis.design(batch, step), step == 0);
    const RegressionFit mean_fit = cond.fit(next);

    StepCoefficients& rec = sol.coefficients[step];
    rec.node = step;
    rec.state = mean_fit.coefficients;
    rec.ridge = mean_fit.ridge;
    rec.z.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t path = 0; path < m; ++path) {
        zt[path] = (next[path] - mean_fit.fitted[path]) * batch.increment(step, path)[j];
      }
      const RegressionFit zfit = cond.fit(zt);
      rec.z[j] = zfit.coefficients / dt;
      for (std::size_t path = 0; path < m; ++path) zrow[path * d + j] = zfit.fitted[path] / dt;
    }

    DriverContext ctx;
    ctx.t = grid[step];
    ctx.node = step;
    for (std::size_t path = 0; path < m; ++path) {
      ctx.path = path;
      ctx.regime = batch.regime(step, path);
      const std::span<const double> zp(zrow.data() + path * d, d);
      const double base = mean_fit.fitted[path];
      double x = log_mode ? base : std::max(base, options.floor);
      bool converged = false;
      int it = 0;
      while (it < options.inner_max_iterations) {
        ++it;
        const double arg = log_mode ? x : std::max(x, options.floor);
        const double updated = base + step_driver.g(ctx, arg, zp) * dt;
        if (!std::isfinite(updated)) {
          throw NumericalError("scalar-bsde-solver", where,
                               "non-finite value on path " + std::to_string(path));
        }
        const double change = std::abs(updated - x);
        x = updated;
        if (change <= options.inner_tolerance * std::max(1.0, std::abs(x))) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        // Fixed-point map not contracting here; Newton on F(x) = x - phi(x), accepted only on
        // the branch where F is increasing (1 - dt dg/dy > 0) so the implicit step is well posed.
        const auto phi = [&](double v) {
          return base + step_driver.g(ctx, log_mode ? v : std::max(v, options.floor), zp) * dt;
        };
        double xn = log_mode ? base : std::max(base, options.floor);
        double slope = 0.0;
        for (int k = 0; k < options.inner_max_iterations; ++k) {
          ++it;
          const double f = xn - phi(xn);
          const double h = 1e-7 * std::max(1.0, std::abs(xn));
          slope = 1.0 - (phi(xn + h) - phi(xn - h)) / (2.0 * h);
          if (!std::isfinite(f) || !std::isfinite(slope) || !(slope > 0.0)) break;
          const double next_x = xn - f / slope;
          const double change = std::abs(next_x - xn);
          xn = next_x;
          if (change <= options.inner_tolerance * std::max(1.0, std::abs(xn))) {
            converged = std::isfinite(xn);
            break;
          }
        }
        if (converged) x = xn;
      }
      if (!converged) {
        throw NumericalError("scalar-bsde-solver", where,
                             "implicit step did not contract within " +
                                 std::to_string(options.inner_max_iterations) +
                                 " iterations on path " + std::to_string(path));
      }
      sol.max_inner_iterations = std::max(sol.max_inner_iterations, it);
      if (!log_mode && x < options.floor) {
        x = options.floor;
        ++sol.clamp_events;
      }
      current[path] = x;
      const double yv = log_mode ? std::exp(x) : x;
      sol.y[step * m + path] = yv;
      double* zout = sol.z.data() + (step * m + path) * d;
      for (std::size_t j = 0; j < d; ++j) zout[j] = log_mode ? yv * zp[j] : zp[j];
    }

    if (step == 0) {
      double sum = 0.0;
      for (std::size_t path = 0; path < m; ++path) sum += sol.y[m + path];
      const double mean = sum / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t path = 0; path < m; ++path) {
        ss += (sol.y[m + path] - mean) * (sol.y[m + path] - mean);
      }
      sol.y0_stderr = m > 1 ? std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m)) : 0.0;
    }
    next.swap(current);
  }
  return sol;
}

}  // namespace bsde
