#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bsde/portfolio.hpp"
#include "bsde/scenario.hpp"

namespace bsde::testing {

/// One-stock market with constant lambda per regime: b = lambda * sigma, sigma = 0.5.
inline MarketSpec constant_lambda_market(const Eigen::MatrixXd& q, const std::vector<double>& lambdas,
                                         double gamma = 0.5, std::vector<double> zeta = {}) {
  MarketSpec m;
  m.chain = ChainGenerator(q);
  for (double l : lambdas) {
    RegimeCoefficients c;
    c.drift.push_back(Eigen::VectorXd::Constant(1, 0.5 * l));
    c.volatility.push_back(Eigen::MatrixXd::Constant(1, 1, 0.5));
    m.regimes.push_back(c);
  }
  if (zeta.empty()) zeta.assign(lambdas.size(), 1.0);
  for (double z : zeta) m.zeta.push_back(TerminalFactor{z, 0.0, 0});
  m.gamma = gamma;
  m.mu = 0.01;
  return m;
}

inline MarketSpec merton_market(double lambda = 0.2, double gamma = 0.5) {
  return constant_lambda_market(Eigen::MatrixXd::Zero(1, 1), {lambda}, gamma);
}

inline Eigen::MatrixXd symmetric_two_state(double rate = 1.0) {
  Eigen::MatrixXd q(2, 2);
  q << -rate, rate, rate, -rate;
  return q;
}

}  // namespace bsde::testing
