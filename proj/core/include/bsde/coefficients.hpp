#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bsde {

/// Reciprocal condition estimate of sigma*sigma' below which it is treated as singular.
inline constexpr double kSingularRcond = 1e-12;

/// lambda = sigma' (sigma sigma')^{-1} b, via a Cholesky factorization of sigma sigma'.
/// Throws DegeneracyError if sigma sigma' is numerically singular.
Eigen::VectorXd market_price_of_risk(const Eigen::VectorXd& drift, const Eigen::MatrixXd& vol);

using VolatilityFn = std::function<Eigen::MatrixXd(double t, std::size_t regime)>;

struct NondegeneracyProbe {
  double t = 0.0;
  std::size_t regime = 0;
  double min_eigenvalue = 0.0;
};

struct NondegeneracyReport {
  double mu = 0.0;
  /// min over probes of (smallest eigenvalue of sigma sigma') - mu.
  double worst_margin = 0.0;
  double worst_t = 0.0;
  std::size_t worst_regime = 0;
  bool pass = false;
  std::vector<NondegeneracyProbe> probes;
};

/// Checks sigma(t,l) sigma(t,l)' >= mu I at every (t, l) probe. Report-only; mu must be positive.
NondegeneracyReport check_nondegeneracy(const VolatilityFn& vol, std::span<const double> times,
                                        std::size_t regimes, double mu);

}  // namespace bsde
