#include "bsde/coefficients.hpp"

#include <limits>

#include "bsde/errors.hpp"

namespace bsde {

Eigen::VectorXd market_price_of_risk(const Eigen::VectorXd& drift, const Eigen::MatrixXd& vol) {
  if (vol.rows() != drift.size()) {
    throw ConfigError("volatility", "row count must match the drift dimension");
  }
  const Eigen::MatrixXd gram = vol * vol.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond)) {
    throw DegeneracyError("sigma*sigma' is numerically singular");
  }
  return vol.transpose() * llt.solve(drift);
}

NondegeneracyReport check_nondegeneracy(const VolatilityFn& vol, std::span<const double> times,
                                        std::size_t regimes, double mu) {
  if (!(mu > 0.0)) throw ConfigError("mu", "must be positive");
  NondegeneracyReport report;
  report.mu = mu;
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (double t : times) {
    for (std::size_t l = 0; l < regimes; ++l) {
      const Eigen::MatrixXd s = vol(t, l);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s * s.transpose(),
                                                         Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues().minCoeff();
      report.probes.push_back({t, l, lo});
      if (lo - mu < report.worst_margin) {
        report.worst_margin = lo - mu;
        report.worst_t = t;
        report.worst_regime = l;
      }
    }
  }
  report.pass = !report.probes.empty() && report.worst_margin >= 0.0;
  return report;
}

}  // namespace bsde
