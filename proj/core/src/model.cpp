#include "bsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bsde/errors.hpp"
#include "bsde/stats.hpp"

namespace bsde {

void GrowthEnvelope::validate() const {
  if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz)) {
    throw ConfigError("envelope.A", "must be finite and nonnegative");
  }
  if (!(singularity >= 0.0) || !std::isfinite(singularity)) {
    throw ConfigError("envelope.delta", "must be finite and nonnegative");
  }
  if (singularity == 1.0) throw ConfigError("envelope.delta", "delta != 1 is required");
}

GeneratorSystemSpec::GeneratorSystemSpec(std::size_t dimension, std::size_t brownian_dim,
                                         std::vector<CouplingFn> coupling,
                                         std::vector<DiagonalFn> diagonal,
                                         GrowthEnvelope envelope)
    : n_(dimension),
      d_(brownian_dim),
      coupling_(std::move(coupling)),
      diagonal_(std::move(diagonal)),
      envelope_(std::move(envelope)) {
  if (n_ == 0) throw ConfigError("dimension", "must be at least 1");
  if (d_ == 0) throw ConfigError("brownian_dim", "must be at least 1");
  if (coupling_.empty()) coupling_.resize(n_);
  if (coupling_.size() != n_) throw ConfigError("coupling", "needs one entry per component");
  if (diagonal_.size() != n_) throw ConfigError("diagonal", "needs one entry per component");
  for (const auto& h : diagonal_) {
    if (!h) throw ConfigError("diagonal", "every component needs a diagonal part");
  }
  envelope_.validate();
}

double GeneratorSystemSpec::diagonal(std::size_t i, const EvalContext& ctx, double y,
                                     std::span<const double> z) const {
  if (!(y > 0.0)) {
    throw DomainError("diagonal generator H_2^" + std::to_string(i) +
                      " evaluated at y <= 0 (y = " + std::to_string(y) + ")");
  }
  return diagonal_[i](ctx, y, z);
}

double GeneratorSystemSpec::evaluate(std::size_t i, const EvalContext& ctx,
                                     std::span<const double> y, std::span<const double> z) const {
  return coupling(i, ctx, y) + diagonal(i, ctx, y[i], z.subspan(i * d_, d_));
}

void TerminalSpec::validate_exponents() const {
  if (!(p >= 2.0)) throw ConfigError("integrability.p", "p >= 2 is required");
  if (!(q > 1.0)) throw ConfigError("integrability.q", "q > 1 is required");
}

std::vector<std::vector<double>> sample_terminal(const TerminalSpec& spec,
                                                 const ScenarioBatch& batch) {
  if (!spec.sampler) throw ConfigError("terminal", "no sampler");
  std::vector<std::vector<double>> out(spec.dimension, std::vector<double>(batch.paths()));
  std::vector<double> row(spec.dimension);
  for (std::size_t path = 0; path < batch.paths(); ++path) {
    spec.sampler(batch, path, row);
    for (std::size_t i = 0; i < spec.dimension; ++i) out[i][path] = row[i];
  }
  return out;
}

std::vector<Probe> default_probe_grid(std::size_t n, std::size_t d, double horizon,
                                      const ProbeGridOptions& options) {
  std::vector<Probe> probes;
  const std::size_t ny = options.y_values.size();
  const std::size_t nz = options.z_values.size();
  std::size_t y_combos = 1;
  for (std::size_t i = 0; i < n; ++i) y_combos *= ny;
  std::size_t z_combos = 1;
  for (std::size_t j = 0; j < d; ++j) z_combos *= nz;
  const std::size_t times = std::max<std::size_t>(options.time_points, 1);
  for (std::size_t ti = 0; ti < times; ++ti) {
    const double t = times == 1 ? 0.0 : horizon * static_cast<double>(ti) / static_cast<double>(times - 1);
    for (std::size_t r = 0; r < std::max<std::size_t>(options.regimes, 1); ++r) {
      for (std::size_t yc = 0; yc < y_combos; ++yc) {
        for (std::size_t zc = 0; zc < z_combos; ++zc) {
          Probe p;
          p.t = t;
          p.regime = r;
          p.y.resize(n);
          std::size_t code = yc;
          for (std::size_t i = 0; i < n; ++i) {
            p.y[i] = options.y_values[code % ny];
            code /= ny;
          }
          std::vector<double> row(d);
          code = zc;
          for (std::size_t j = 0; j < d; ++j) {
            row[j] = options.z_values[code % nz];
            code /= nz;
          }
          p.z.reserve(n * d);
          for (std::size_t i = 0; i < n; ++i) p.z.insert(p.z.end(), row.begin(), row.end());
          probes.push_back(std::move(p));
        }
      }
    }
  }
  return probes;
}

std::size_t ValidationReport::violation_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.pass; }));
}

void ValidationReport::merge(const ValidationReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  for (const auto& [k, v] : other.evaluated) evaluated[k] += v;
}

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string describe(const Probe& p, std::size_t index) {
  std::ostringstream os;
  os.precision(6);
  os << "#" << index << " t=" << p.t << " regime=" << p.regime << " y=(";
  for (std::size_t i = 0; i < p.y.size(); ++i) os << (i ? "," : "") << p.y[i];
  os << ") z=(";
  for (std::size_t i = 0; i < p.z.size(); ++i) os << (i ? "," : "") << p.z[i];
  os << ")";
  return os.str();
}

std::string describe_pair(const Probe& a, std::size_t ia, const Probe& b, std::size_t ib) {
  return describe(a, ia) + " | " + describe(b, ib);
}

bool within(double lhs, double rhs, double tol) { return lhs <= rhs + tol * (1.0 + std::abs(rhs)); }

/// Pairs of probe indices sharing (t, regime), in a fixed order.
std::vector<std::pair<std::size_t, std::size_t>> probe_pairs(std::span<const Probe> probes,
                                                             std::size_t max_pairs) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::pair<double, std::size_t>> keys;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const std::pair<double, std::size_t> key{probes[i].t, probes[i].regime};
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - keys.begin())].push_back(i);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& g : groups) {
    const std::size_t size = g.size();
    if (size < 2) continue;
    if (size * (size - 1) / 2 <= max_pairs) {
      for (std::size_t a = 0; a < size; ++a)
        for (std::size_t b = a + 1; b < size; ++b) pairs.emplace_back(g[a], g[b]);
      continue;
    }
    std::vector<std::size_t> strides{1, 2, 3, 5, 7, 11, 13, size / 3, size / 2};
    std::sort(strides.begin(), strides.end());
    strides.erase(std::unique(strides.begin(), strides.end()), strides.end());
    for (std::size_t a = 0; a < size; ++a) {
      for (std::size_t s : strides) {
        if (s == 0 || s >= size) continue;
        pairs.emplace_back(g[a], g[(a + s) % size]);
      }
    }
  }
  return pairs;
}

}  // namespace

ValidationReport validate_coupling(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                                   const ProbeCheckOptions& options) {
  if (probes.empty()) throw ConfigError("probes", "probe set is empty");
  ValidationReport report;
  const double a = spec.envelope().lipschitz;
  const std::size_t n = spec.dimension();
  std::vector<std::vector<double>> values(probes.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const Probe& p = probes[k];
    const EvalContext ctx{p.t, 0, p.regime};
    for (std::size_t i = 0; i < n; ++i) {
      const double h = spec.coupling(i, ctx, p.y);
      values[k][i] = h;
      const std::string comp = "[" + std::to_string(i) + "]";
      report.evaluated["coupling_nonnegative"]++;
      if (!within(0.0, h, options.tolerance)) {
        report.entries.push_back({"coupling_nonnegative" + comp, describe(p, k), 0.0, h, false});
      }
      const double bound = a * (1.0 + norm(p.y));
      report.evaluated["coupling_linear_growth"]++;
      if (!within(h, bound, options.tolerance)) {
        report.entries.push_back({"coupling_linear_growth" + comp, describe(p, k), h, bound, false});
      }
    }
  }
  for (const auto& [ka, kb] : probe_pairs(probes, options.max_pairs_per_group)) {
    const double dist = distance(probes[ka].y, probes[kb].y);
    for (std::size_t i = 0; i < n; ++i) {
      const double lhs = std::abs(values[ka][i] - values[kb][i]);
      const double rhs = a * dist;
      report.evaluated["coupling_lipschitz"]++;
      if (!within(lhs, rhs, options.tolerance)) {
        report.entries.push_back({"coupling_lipschitz[" + std::to_string(i) + "]",
                                  describe_pair(probes[ka], ka, probes[kb], kb), lhs, rhs, false});
      }
    }
  }
  return report;
}

ValidationReport validate_diagonal(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                                   const ProbeCheckOptions& options) {
  if (probes.empty()) throw ConfigError("probes", "probe set is empty");
  ValidationReport report;
  const auto& env = spec.envelope();
  const std::size_t n = spec.dimension();
  const std::size_t d = spec.brownian_dim();
  std::vector<std::vector<double>> values(probes.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const Probe& p = probes[k];
    const EvalContext ctx{p.t, 0, p.regime};
    for (std::size_t i = 0; i < n; ++i) {
      const auto zi = std::span<const double>(p.z).subspan(i * d, d);
      const double h = spec.diagonal(i, ctx, p.y[i], zi);
      values[k][i] = h;
      const std::string comp = "[" + std::to_string(i) + "]";
      report.evaluated["diagonal_nonnegative"]++;
      if (!within(0.0, h, options.tolerance)) {
        report.entries.push_back({"diagonal_nonnegative" + comp, describe(p, k), 0.0, h, false});
      }
      const double zz = norm(zi) * norm(zi);
      const double bound = env.alpha_at(p.t, p.regime) + env.beta_at(p.t, p.regime) * p.y[i] +
                           env.singularity / (2.0 * p.y[i]) * zz;
      report.evaluated["diagonal_envelope"]++;
      if (!within(h, bound, options.tolerance)) {
        report.entries.push_back({"diagonal_envelope" + comp, describe(p, k), h, bound, false});
      }
    }
  }
  std::vector<double> mid_z(d);
  for (const auto& [ka, kb] : probe_pairs(probes, options.max_pairs_per_group)) {
    const Probe& pa = probes[ka];
    const Probe& pb = probes[kb];
    const EvalContext ctx{pa.t, 0, pa.regime};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) mid_z[j] = 0.5 * (pa.z[i * d + j] + pb.z[i * d + j]);
      const double lhs = spec.diagonal(i, ctx, 0.5 * (pa.y[i] + pb.y[i]), mid_z);
      const double rhs = 0.5 * (values[ka][i] + values[kb][i]);
      report.evaluated["diagonal_convexity"]++;
      if (!within(lhs, rhs, options.tolerance)) {
        report.entries.push_back({"diagonal_convexity[" + std::to_string(i) + "]",
                                  describe_pair(pa, ka, pb, kb), lhs, rhs, false});
      }
    }
  }
  return report;
}

ValidationReport validate_h1(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                             const ProbeCheckOptions& options) {
  ValidationReport report = validate_coupling(spec, probes, options);
  report.merge(validate_diagonal(spec, probes, options));
  return report;
}

ValidationReport validate_terminal(const TerminalSpec& spec, const ScenarioBatch& batch,
                                   const GrowthEnvelope& envelope) {
  spec.validate_exponents();
  envelope.validate();
  const auto xi = sample_terminal(spec, batch);
  const std::size_t m = batch.paths();
  const std::size_t n = spec.dimension;
  const TimeGrid& grid = batch.grid();
  const double dt = grid.dt();
  const double delta = envelope.singularity;
  ValidationReport report;

  for (std::size_t i = 0; i < n; ++i) {
    const std::string comp = "[" + std::to_string(i) + "]";
    double lo = std::numeric_limits<double>::infinity();
    std::size_t where = 0;
    for (std::size_t path = 0; path < m; ++path) {
      if (xi[i][path] < lo) {
        lo = xi[i][path];
        where = path;
      }
    }
    if (!(lo > 0.0)) {
      throw DomainError("terminal component " + std::to_string(i) +
                        " is nonpositive on path " + std::to_string(where));
    }
    report.evaluated["terminal_min"]++;
    report.entries.push_back({"terminal_min" + comp, "all paths", 0.0, lo, true});

    std::vector<double> inv(m);
    for (std::size_t path = 0; path < m; ++path) inv[path] = std::pow(1.0 / xi[i][path], spec.q);
    const auto est = mean_estimate(inv);
    report.evaluated["inverse_moment"]++;
    report.entries.push_back({"inverse_moment" + comp, "E[(1/xi)^q]", est.mean,
                              std::numeric_limits<double>::infinity(), std::isfinite(est.mean),
                              est.stderr_value});
  }

  std::vector<double> big(m);
  for (std::size_t path = 0; path < m; ++path) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm2 += xi[i][path] * xi[i][path];
    double int_alpha = 0.0;
    double int_beta = 0.0;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const std::size_t r = batch.regime(k, path);
      int_alpha += std::pow(envelope.alpha_at(grid[k], r), 2.0 + delta) * dt;
      int_beta += envelope.beta_at(grid[k], r) * dt;
    }
    const double base = 1.0 + std::pow(std::sqrt(norm2), 2.0 + delta) + int_alpha;
    big[path] = std::pow(base, spec.p) * std::exp(spec.p * (2.0 + delta) * int_beta);
  }
  const auto est = mean_estimate(big);
  report.evaluated["growth_moment"]++;
  report.entries.push_back({"growth_moment",
                            "E[(1+|xi|^{2+delta}+int alpha^{2+delta})^p e^{p(2+delta) int beta}]",
                            est.mean, std::numeric_limits<double>::infinity(),
                            std::isfinite(est.mean), est.stderr_value});
  return report;
}

}  // namespace bsde
