#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsde/scenario.hpp"

namespace bsde {

/// Feature map phi(node, W_t, regime). The constant feature is always column 0; the user map
/// supplies the remaining columns.
class RegressionBasis {
 public:
  using FeatureFn = std::function<void(std::size_t node, std::span<const double> w,
                                       std::size_t regime, std::span<double> out)>;

  RegressionBasis(std::size_t extra_features, FeatureFn fn);

  /// Only the constant feature; every fit collapses to the sample mean.
  static RegressionBasis constant();
  /// Constant plus monomials in W up to total degree `degree`; with more than one regime,
  /// each of those (including the constant) is repeated times the indicator of regimes 1..k-1.
  static RegressionBasis polynomial(std::size_t brownian_dim, std::size_t regimes,
                                    unsigned degree = 2);

  std::size_t feature_count() const noexcept { return extra_ + 1; }

  /// M x feature_count design matrix at one node.
  Eigen::MatrixXd design(const ScenarioBatch& batch, std::size_t node) const;
  void features(std::size_t node, std::span<const double> w, std::size_t regime,
                std::span<double> out) const;

 private:
  std::size_t extra_;
  FeatureFn fn_;
};

struct RegressionFit {
  std::vector<double> fitted;
  /// Coefficients on the raw (uncentered) features, constant first.
  Eigen::VectorXd coefficients;
  double ridge = 0.0;
};

/// Least-squares projection onto the span of one node's features. The design is centred and
/// factorized once so several targets can share it. Targets are shifted by their first value
/// before fitting, so constant targets are reproduced bit-for-bit.
class ConditionalExpectation {
 public:
  /// `mean_only` forces the plain sample mean (used at t = 0, where the conditional
  /// expectation is a number). Throws NumericalError when the ridge-regularized normal
  /// equations cannot be factorized, ConfigError when M < feature count.
  explicit ConditionalExpectation(const Eigen::MatrixXd& design, bool mean_only = false,
                                  double ridge_scale = 1e-10);

  RegressionFit fit(std::span<const double> targets) const;

  std::size_t paths() const noexcept { return paths_; }
  bool mean_only() const noexcept { return mean_only_; }

 private:
  std::size_t paths_;
  std::size_t features_;
  bool mean_only_;
  double ridge_ = 0.0;
  Eigen::RowVectorXd means_;
  Eigen::MatrixXd centred_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

RegressionFit regress_conditional(std::span<const double> targets, const Eigen::MatrixXd& design,
                                  bool mean_only = false);

}  // namespace bsde
