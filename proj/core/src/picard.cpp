#include "bsde/picard.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "bsde/errors.hpp"

namespace bsde {

ContractionHorizon contraction_horizon(double lipschitz, double p, double delta, std::size_t n,
                                       double horizon) {
  if (!(p > 1.0)) throw ConfigError("p", "contraction horizon needs p > 1");
  if (!(delta >= 0.0) || delta == 1.0) throw ConfigError("delta", "needs delta >= 0, delta != 1");
  if (!(lipschitz >= 0.0)) throw ConfigError("A", "must be nonnegative");
  if (!(horizon > 0.0)) throw ConfigError("horizon", "must be positive");
  if (n == 0) throw ConfigError("n", "must be at least 1");
  if (lipschitz == 0.0) return {};
  // Extended precision so the rounded result is the nearest double in practice.
  using ld = long double;
  const ld lp = p, ld_delta = delta;
  const ld denom = (lp / (lp - 1.0L)) * std::pow(3.0L, (lp - 1.0L) / lp) *
                   std::pow(2.0L, 1.0L + ld_delta + 1.0L / lp) *
                   std::pow(static_cast<ld>(lipschitz), 2.0L + ld_delta) *
                   std::pow(static_cast<ld>(n), (2.0L + ld_delta) / 2.0L);
  const ld eps = 1.0L / denom;
  ContractionHorizon out;
  out.epsilon = static_cast<double>(eps);
  // Unique integer with T/eps <= m0 < T/eps + 1.
  out.m0 = std::max(1LL, static_cast<long long>(std::ceil(static_cast<ld>(horizon) / eps)));
  return out;
}

IterationDelta iteration_delta(std::span<const BsdeSolutionGrid> prev,
                               std::span<const BsdeSolutionGrid> next) {
  if (prev.size() != next.size()) throw InternalError("iteration_delta: component count mismatch");
  IterationDelta out;
  double zsum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const auto& a = prev[i];
    const auto& b = next[i];
    if (a.y.size() != b.y.size() || a.z.size() != b.z.size() || a.dim != b.dim ||
        a.paths != b.paths) {
      throw InternalError("iteration_delta: grid shape mismatch");
    }
    for (std::size_t k = 0; k < a.y.size(); ++k) out.y_sup = std::max(out.y_sup, std::abs(b.y[k] - a.y[k]));
    const std::size_t d = std::max<std::size_t>(a.dim, 1);
    for (std::size_t k = 0; k < a.z.size(); k += d) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.dim; ++j) s += (b.z[k + j] - a.z[k + j]) * (b.z[k + j] - a.z[k + j]);
      zsum += s;
      ++count;
    }
  }
  out.z_l2 = count > 0 ? std::sqrt(zsum / static_cast<double>(count)) : 0.0;
  return out;
}

double PicardReport::fitted_ratio(std::size_t window) const {
  std::vector<double> xs;
  std::vector<double> ys;
  const std::size_t start = history.size() > window ? history.size() - window : 0;
  for (std::size_t k = start; k < history.size(); ++k) {
    if (history[k].delta_y > 0.0) {
      xs.push_back(static_cast<double>(k));
      ys.push_back(std::log(history[k].delta_y));
    }
  }
  if (xs.size() < 2) return std::nan("");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return std::exp(sxy / sxx);
}

std::vector<BsdeSolutionGrid> picard_initial_iterate(const GeneratorSystemSpec& system,
                                                     const ScenarioBatch& batch) {
  return std::vector<BsdeSolutionGrid>(
      system.dimension(),
      BsdeSolutionGrid::filled(batch.grid(), batch.paths(), batch.brownian_dim(), 1.0, 0.0));
}

namespace {

/// H_1^i(t_node, y^{(m)}(node, path)) for every node and path, layout nodes x paths.
std::vector<double> frozen_coupling(const GeneratorSystemSpec& system, std::size_t component,
                                    std::span<const BsdeSolutionGrid> frozen) {
  const auto& ref = frozen.front();
  const std::size_t m = ref.paths;
  const std::size_t nodes = ref.grid.node_count();
  std::vector<double> out(nodes * m, 0.0);
  if (!system.has_coupling(component)) return out;
  std::vector<double> y(system.dimension());
  for (std::size_t node = 0; node < nodes; ++node) {
    EvalContext ctx{ref.grid[node], node, 0};
    for (std::size_t path = 0; path < m; ++path) {
      for (std::size_t j = 0; j < y.size(); ++j) y[j] = frozen[j].y_at(node, path);
      out[node * m + path] = system.coupling(component, ctx, y);
    }
  }
  return out;
}

}  // namespace

ScalarDriver frozen_component_driver(const GeneratorSystemSpec& system, std::size_t component,
                                     std::span<const BsdeSolutionGrid> frozen) {
  if (frozen.size() != system.dimension()) throw InternalError("frozen iterate has wrong dimension");
  const std::size_t m = frozen.front().paths;
  auto coupling = std::make_shared<const std::vector<double>>(frozen_coupling(system, component, frozen));
  const bool has_coupling = system.has_coupling(component);
  ScalarDriver driver;
  const GeneratorSystemSpec* sys = &system;
  if (has_coupling) {
    driver.g = [sys, component, coupling, m](const DriverContext& ctx, double y,
                                             std::span<const double> z) {
      const EvalContext ec{ctx.t, ctx.node, ctx.regime};
      return (*coupling)[ctx.node * m + ctx.path] + sys->diagonal(component, ec, y, z);
    };
  } else {
    driver.g = [sys, component](const DriverContext& ctx, double y, std::span<const double> z) {
      return sys->diagonal(component, EvalContext{ctx.t, ctx.node, ctx.regime}, y, z);
    };
  }
  const GrowthEnvelope& env = system.envelope();
  driver.a = [env, coupling, m](const DriverContext& ctx) {
    return env.alpha_at(ctx.t, ctx.regime) + (*coupling)[ctx.node * m + ctx.path];
  };
  driver.b = [env](const DriverContext& ctx) { return env.beta_at(ctx.t, ctx.regime); };
  driver.delta = env.singularity;
  return driver;
}

PicardResult picard_solve(const GeneratorSystemSpec& system, const TerminalSpec& terminal,
                          const ScenarioBatch& batch, const RegressionBasis& basis,
                          const PicardOptions& options) {
  return picard_solve_from(system, terminal, batch, basis, picard_initial_iterate(system, batch),
                           options);
}

PicardResult picard_solve_from(const GeneratorSystemSpec& system, const TerminalSpec& terminal,
                               const ScenarioBatch& batch, const RegressionBasis& basis,
                               std::vector<BsdeSolutionGrid> start, const PicardOptions& options) {
  if (!(options.tolerance > 0.0)) throw ConfigError("solver.tol", "must be positive");
  if (options.max_iterations < 1) throw ConfigError("solver.max_iter", "must be at least 1");
  if (terminal.dimension != system.dimension()) {
    throw ConfigError("terminal", "dimension does not match the generator system");
  }
  if (system.brownian_dim() != batch.brownian_dim()) {
    throw ConfigError("brownian_dim", "generator and batch disagree on the Brownian dimension");
  }
  if (start.size() != system.dimension()) throw InternalError("starting iterate has wrong dimension");
  const auto xi = sample_terminal(terminal, batch);

  PicardResult result;
  result.report.tolerance = options.tolerance;
  result.report.horizon =
      contraction_horizon(system.envelope().lipschitz, options.integrability_p,
                          system.envelope().singularity, system.dimension(), batch.grid().horizon());

  std::vector<BsdeSolutionGrid> current = std::move(start);
  for (std::size_t sweep = 1; sweep <= options.max_iterations; ++sweep) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<BsdeSolutionGrid> next;
    next.reserve(system.dimension());
    for (std::size_t i = 0; i < system.dimension(); ++i) {
      try {
        const ScalarDriver driver = frozen_component_driver(system, i, current);
        next.push_back(solve_scalar_bsde(driver, xi[i], batch, basis, options.solve));
      } catch (const NumericalError& e) {
        throw NumericalError("picard-iterator", static_cast<std::ptrdiff_t>(sweep),
                             "component " + std::to_string(i) + ": " + e.what());
      } catch (const DomainError& e) {
        throw NumericalError("picard-iterator", static_cast<std::ptrdiff_t>(sweep),
                             "component " + std::to_string(i) + ": " + e.what());
      }
    }
    const IterationDelta delta = iteration_delta(current, next);
    const auto t1 = std::chrono::steady_clock::now();
    result.report.history.push_back(
        {sweep, delta.y_sup, delta.z_l2,
         std::chrono::duration<double, std::milli>(t1 - t0).count()});
    current = std::move(next);
    if (delta.y_sup <= options.tolerance) {
      result.report.converged = true;
      break;
    }
  }
  const auto& hz = result.report.horizon;
  result.report.within_heuristic_bound =
      !result.report.converged ||
      static_cast<double>(result.report.iterations()) <= 10.0 * static_cast<double>(hz.m0);
  result.components = std::move(current);
  return result;
}

}  // namespace bsde
