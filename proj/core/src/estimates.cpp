#include "bsde/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsde/errors.hpp"
#include "bsde/stats.hpp"

namespace bsde {

EstimateReport make_inequality_report(std::string check, double lhs, double rhs,
                                      double lhs_stderr, double rhs_stderr, double sigmas) {
  EstimateReport r;
  r.check = std::move(check);
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = rhs - lhs;
  r.lhs_stderr = lhs_stderr;
  r.rhs_stderr = rhs_stderr;
  r.sigmas = sigmas;
  const double combined = std::sqrt(lhs_stderr * lhs_stderr + rhs_stderr * rhs_stderr);
  r.pass = lhs <= rhs + sigmas * combined;
  return r;
}

EstimateReport check_positivity(const BsdeSolutionGrid& sol) {
  return check_positivity(std::span<const BsdeSolutionGrid>(&sol, 1));
}

EstimateReport check_positivity(std::span<const BsdeSolutionGrid> components) {
  double lo = std::numeric_limits<double>::infinity();
  std::size_t clamps = 0;
  for (const auto& c : components) {
    for (double v : c.y) lo = std::min(lo, v);
    clamps += c.clamp_events;
  }
  EstimateReport r;
  r.check = "positivity";
  r.lhs = 0.0;
  r.rhs = lo;
  r.slack = lo;
  r.pass = lo > 0.0;
  r.details["min_y"] = lo;
  r.details["clamp_events"] = static_cast<double>(clamps);
  if (clamps > 0) {
    r.warnings.push_back(std::to_string(clamps) + " floor clamp events; minimum equals the floor");
  }
  return r;
}

namespace {

struct EnvelopePaths {
  std::vector<double> a;  // nodes x paths (last node unused)
  std::vector<double> b;
};

EnvelopePaths evaluate_envelope(const ScalarDriver& env, const ScenarioBatch& batch) {
  const auto& grid = batch.grid();
  const std::size_t m = batch.paths();
  EnvelopePaths out;
  out.a.assign(grid.node_count() * m, 0.0);
  out.b.assign(grid.node_count() * m, 0.0);
  DriverContext ctx;
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    ctx.t = grid[node];
    ctx.node = node;
    for (std::size_t path = 0; path < m; ++path) {
      ctx.path = path;
      ctx.regime = batch.regime(node, path);
      out.a[node * m + path] = env.a_at(ctx);
      out.b[node * m + path] = env.b_at(ctx);
    }
  }
  return out;
}

void require_shapes(const BsdeSolutionGrid& sol, const ScenarioBatch& batch) {
  if (sol.paths != batch.paths() || sol.grid.node_count() != batch.grid().node_count()) {
    throw InternalError("solution grid and batch have different shapes");
  }
}

}  // namespace

EstimateReport check_moment_bound(const BsdeSolutionGrid& sol, const ScalarDriver& envelope,
                                  const ScenarioBatch& batch, std::span<const double> terminal,
                                  const RegressionBasis* basis, double sigmas) {
  require_shapes(sol, batch);
  if (terminal.size() != sol.paths) throw InternalError("terminal sample count mismatch");
  for (double v : sol.y) {
    if (!(v > 0.0)) throw DomainError("moment bound needs a positive solution");
  }
  const auto& grid = sol.grid;
  const std::size_t m = sol.paths;
  const std::size_t steps = grid.steps();
  const double dt = grid.dt();
  const double delta = envelope.delta;
  const double power = 2.0 + delta;
  const auto env = evaluate_envelope(envelope, batch);

  // weight[node][path] = exp((1+delta) t + (2+delta) int_0^t b), left sums.
  std::vector<double> log_weight((steps + 1) * m, 0.0);
  for (std::size_t path = 0; path < m; ++path) {
    double ib = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
      log_weight[k * m + path] = (1.0 + delta) * grid[k] + power * ib;
      if (k < steps) ib += env.b[k * m + path] * dt;
    }
  }
  // tail[node][path] = weight_T zeta^{2+delta} + sum_{k >= node} weight_k a_k^{2+delta} dt.
  std::vector<double> tail((steps + 1) * m, 0.0);
  std::vector<double> a_part(m, 0.0);
  for (std::size_t path = 0; path < m; ++path) {
    double acc = std::exp(log_weight[steps * m + path]) * std::pow(terminal[path], power);
    tail[steps * m + path] = acc;
    for (std::size_t k = steps; k-- > 0;) {
      const double contrib =
          std::exp(log_weight[k * m + path]) * std::pow(env.a[k * m + path], power) * dt;
      acc += contrib;
      a_part[path] += contrib;
      tail[k * m + path] = acc;
    }
  }
  const auto rhs = mean_estimate(std::span<const double>(tail.data(), m));
  const auto a_share = mean_estimate(a_part);
  const double y0 = sol.y0();
  const double lhs = std::pow(y0, power);
  const double lhs_se = power * std::pow(y0, power - 1.0) * sol.y0_stderr;

  EstimateReport r =
      make_inequality_report("moment_bound_t0", lhs, rhs.mean, lhs_se, rhs.stderr_value, sigmas);
  r.details["delta"] = delta;
  r.details["a_integral_share"] = rhs.mean > 0.0 ? a_share.mean / rhs.mean : 0.0;
  r.details["rhs_over_lhs"] = lhs > 0.0 ? rhs.mean / lhs : std::numeric_limits<double>::infinity();
  if (r.details["a_integral_share"] > 0.9) {
    r.warnings.push_back("degenerate slack: the a-integral dominates the bound");
  }
  if (r.details["rhs_over_lhs"] > 1e3) {
    r.warnings.push_back("degenerate slack: bound exceeds the left side by over 1e3");
  }

  if (basis != nullptr && steps >= 4) {
    double worst_ratio = 0.0;
    std::size_t violating = 0;
    std::size_t checked = 0;
    std::vector<double> lhs_path(m);
    std::vector<double> target(m);
    for (std::size_t node : {steps / 4, steps / 2, (3 * steps) / 4}) {
      if (node == 0) continue;
      for (std::size_t path = 0; path < m; ++path) {
        lhs_path[path] = std::exp(log_weight[node * m + path]) * std::pow(sol.y_at(node, path), power);
        target[path] = tail[node * m + path];
      }
      const ConditionalExpectation cond(basis->design(batch, node));
      const auto fit = cond.fit(target);
      for (std::size_t path = 0; path < m; ++path) {
        ++checked;
        if (fit.fitted[path] > 0.0) worst_ratio = std::max(worst_ratio, lhs_path[path] / fit.fitted[path]);
        if (lhs_path[path] > fit.fitted[path]) ++violating;
      }
    }
    r.details["interior_max_ratio"] = worst_ratio;
    r.details["interior_violation_fraction"] =
        checked > 0 ? static_cast<double>(violating) / static_cast<double>(checked) : 0.0;
  }
  return r;
}

EstimateReport check_z_moment_ratio(const BsdeSolutionGrid& sol, const ScalarDriver& envelope,
                                    const ScenarioBatch& batch, double p) {
  require_shapes(sol, batch);
  if (envelope.delta == 1.0) throw ConfigError("delta", "Z-moment estimate needs delta != 1");
  if (!(p > 1.0)) throw ConfigError("p", "must exceed 1");
  const auto& grid = sol.grid;
  const std::size_t m = sol.paths;
  const std::size_t steps = grid.steps();
  const double dt = grid.dt();
  const auto env = evaluate_envelope(envelope, batch);
  std::vector<double> num(m);
  std::vector<double> den(m);
  for (std::size_t path = 0; path < m; ++path) {
    double zz = 0.0, ia = 0.0, ib = 0.0, ysup = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      for (double v : sol.z_at(k, path)) zz += v * v * dt;
      ia += env.a[k * m + path] * dt;
      ib += env.b[k * m + path] * dt;
    }
    for (std::size_t k = 0; k <= steps; ++k) ysup = std::max(ysup, sol.y_at(k, path));
    num[path] = std::pow(zz, p / 2.0);
    den[path] = std::pow(ysup, p * (2.0 + envelope.delta)) + std::pow(ia, p) + std::pow(ib, p);
  }
  const auto n = mean_estimate(num);
  const auto dd = mean_estimate(den);
  EstimateReport r;
  r.check = "z_moment_ratio";
  r.informational = true;
  r.lhs = n.mean / (1.0 + dd.mean);
  r.lhs_stderr = n.stderr_value / (1.0 + dd.mean);
  r.rhs = std::numeric_limits<double>::quiet_NaN();
  r.slack = std::numeric_limits<double>::quiet_NaN();
  r.details["numerator"] = n.mean;
  r.details["denominator"] = 1.0 + dd.mean;
  r.details["p"] = p;
  r.details["steps"] = static_cast<double>(steps);
  return r;
}

EstimateReport check_ratio_refinement(std::span<const double> ratios, double growth_limit,
                                      double zero_floor) {
  EstimateReport r;
  r.check = "z_moment_refinement";
  if (ratios.empty()) {
    r.warnings.push_back("no refinement levels supplied");
    return r;
  }
  const double first = ratios.front();
  const double last = ratios.back();
  r.lhs = last;
  r.rhs = (1.0 + growth_limit) * first + zero_floor;
  r.slack = r.rhs - r.lhs;
  r.pass = r.lhs <= r.rhs;
  for (std::size_t k = 0; k < ratios.size(); ++k) r.details["level_" + std::to_string(k)] = ratios[k];
  if (!r.pass) r.warnings.push_back("Z-moment ratio grows under grid refinement");
  return r;
}

EstimateReport check_terminal_lower_bound(const BsdeSolutionGrid& sol,
                                          std::span<const double> terminal, double sigmas) {
  const auto est = mean_estimate(terminal);
  EstimateReport r =
      make_inequality_report("terminal_lower_bound", est.mean, sol.y0(), est.stderr_value, 0.0, sigmas);
  return r;
}

EstimateReport check_value_floor(std::string check, double value, double value_stderr,
                                 double floor, double sigmas) {
  return make_inequality_report(std::move(check), floor, value, 0.0, value_stderr, sigmas);
}

EstimateReport y_sup_norm(std::span<const BsdeSolutionGrid> components) {
  double hi = 0.0;
  for (const auto& c : components)
    for (double v : c.y) hi = std::max(hi, std::abs(v));
  EstimateReport r;
  r.check = "y_sup_norm";
  r.informational = true;
  r.lhs = hi;
  r.rhs = std::numeric_limits<double>::quiet_NaN();
  r.slack = std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace bsde
