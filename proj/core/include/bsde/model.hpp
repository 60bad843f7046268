#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bsde/scenario.hpp"

namespace bsde {

/// Where a generator is being evaluated. `regime` is the chain state on the current path.
struct EvalContext {
  double t = 0.0;
  std::size_t node = 0;
  std::size_t regime = 0;
};

/// H_1^i(t, y): the Lipschitz vector coupling.
using CouplingFn = std::function<double(const EvalContext&, std::span<const double> y)>;
/// H_2^i(t, y_i, z_i): the diagonal, convex, singular-quadratic part. Only defined for y_i > 0.
using DiagonalFn = std::function<double(const EvalContext&, double y, std::span<const double> z)>;
/// Deterministic-in-time or regime-indexed envelope process.
using EnvelopeFn = std::function<double(double t, std::size_t regime)>;

/// Growth constants of the generator:
///   0 <= H_1^i <= A (1 + |y|),  |H_1^i(y1) - H_1^i(y2)| <= A |y1 - y2|,
///   0 <= H_2^i <= alpha + beta y + delta / (2y) |z|^2.
struct GrowthEnvelope {
  double lipschitz = 0.0;    // A
  double singularity = 0.0;  // delta
  EnvelopeFn alpha;          // empty means identically zero
  EnvelopeFn beta;

  double alpha_at(double t, std::size_t regime) const { return alpha ? alpha(t, regime) : 0.0; }
  double beta_at(double t, std::size_t regime) const { return beta ? beta(t, regime) : 0.0; }

  /// A >= 0, delta >= 0 and delta != 1; throws ConfigError otherwise.
  void validate() const;
};

class GeneratorSystemSpec {
 public:
  /// Empty coupling entries mean H_1^i == 0.
  GeneratorSystemSpec(std::size_t dimension, std::size_t brownian_dim,
                      std::vector<CouplingFn> coupling, std::vector<DiagonalFn> diagonal,
                      GrowthEnvelope envelope);

  std::size_t dimension() const noexcept { return n_; }
  std::size_t brownian_dim() const noexcept { return d_; }
  const GrowthEnvelope& envelope() const noexcept { return envelope_; }

  double coupling(std::size_t i, const EvalContext& ctx, std::span<const double> y) const {
    return coupling_[i] ? coupling_[i](ctx, y) : 0.0;
  }
  /// Throws DomainError if y <= 0.
  double diagonal(std::size_t i, const EvalContext& ctx, double y, std::span<const double> z) const;
  const DiagonalFn& diagonal_fn(std::size_t i) const { return diagonal_[i]; }
  bool has_coupling(std::size_t i) const { return static_cast<bool>(coupling_[i]); }

  /// H^i(t, y, z) with z stored row-major (n x d).
  double evaluate(std::size_t i, const EvalContext& ctx, std::span<const double> y,
                  std::span<const double> z) const;

 private:
  std::size_t n_;
  std::size_t d_;
  std::vector<CouplingFn> coupling_;
  std::vector<DiagonalFn> diagonal_;
  GrowthEnvelope envelope_;
};

/// Writes xi(path) (length n) for one path of a batch.
using TerminalSampler =
    std::function<void(const ScenarioBatch&, std::size_t path, std::span<double> out)>;

struct TerminalSpec {
  std::size_t dimension = 0;
  TerminalSampler sampler;
  double p = 2.0;  // integrability exponents
  double q = 2.0;

  /// p >= 2 and q > 1; throws ConfigError otherwise.
  void validate_exponents() const;
};

/// Terminal samples indexed [component][path].
std::vector<std::vector<double>> sample_terminal(const TerminalSpec& spec,
                                                 const ScenarioBatch& batch);

struct Probe {
  double t = 0.0;
  std::size_t regime = 0;
  std::vector<double> y;  // n
  std::vector<double> z;  // n x d, row-major
};

struct ProbeGridOptions {
  std::vector<double> y_values{0.1, 0.5, 1.0, 2.0, 10.0};
  std::vector<double> z_values{-2.0, 0.0, 2.0};
  std::size_t time_points = 5;
  std::size_t regimes = 1;
};

/// Tensor grid over y in y_values^n, a shared z row in z_values^d, uniformly spaced t in [0, T]
/// and every regime.
std::vector<Probe> default_probe_grid(std::size_t n, std::size_t d, double horizon,
                                      const ProbeGridOptions& options = {});

struct ValidationEntry {
  std::string check;
  std::string probe;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
  double stderr_value = 0.0;
};

struct ValidationReport {
  /// Violations for probe checks; one summary row per quantity for Monte Carlo checks.
  std::vector<ValidationEntry> entries;
  /// Number of inequality evaluations per check name.
  std::map<std::string, std::size_t> evaluated;

  std::size_t violation_count() const;
  bool ok() const { return violation_count() == 0; }
  void merge(const ValidationReport& other);
};

struct ProbeCheckOptions {
  /// Relative slack absorbing floating-point rounding in equality cases.
  double tolerance = 1e-10;
  /// Within one (t, regime) group, all pairs are used up to this count; a fixed stride
  /// pattern is used beyond it.
  std::size_t max_pairs_per_group = 20000;
};

/// Growth and Lipschitz checks of the coupling parts.
ValidationReport validate_coupling(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                                   const ProbeCheckOptions& options = {});
/// Envelope and midpoint-convexity checks of the diagonal parts. Probes must have y_i > 0.
ValidationReport validate_diagonal(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                                   const ProbeCheckOptions& options = {});
/// validate_coupling + validate_diagonal.
ValidationReport validate_h1(const GeneratorSystemSpec& spec, std::span<const Probe> probes,
                             const ProbeCheckOptions& options = {});

/// Positivity of xi (hard failure via DomainError), plus the empirical moments
/// E[(1/xi^i)^q] and E[(1 + |xi|^{2+delta} + int alpha^{2+delta})^p e^{p(2+delta) int beta}].
ValidationReport validate_terminal(const TerminalSpec& spec, const ScenarioBatch& batch,
                                   const GrowthEnvelope& envelope);

}  // namespace bsde
