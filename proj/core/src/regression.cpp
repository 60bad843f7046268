#include "bsde/regression.hpp"

#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

RegressionBasis::RegressionBasis(std::size_t extra_features, FeatureFn fn)
    : extra_(extra_features), fn_(std::move(fn)) {
  if (extra_ > 0 && !fn_) throw ConfigError("basis", "feature map missing");
}

RegressionBasis RegressionBasis::constant() { return RegressionBasis(0, nullptr); }

RegressionBasis RegressionBasis::polynomial(std::size_t brownian_dim, std::size_t regimes,
                                            unsigned degree) {
  if (brownian_dim == 0) throw ConfigError("brownian_dim", "must be at least 1");
  if (regimes == 0) throw ConfigError("regimes", "must be at least 1");
  // Exponent tuples of total degree 1..degree in graded order.
  std::vector<std::vector<unsigned>> monomials;
  std::vector<unsigned> e(brownian_dim, 0);
  const auto recurse = [&](auto&& self, std::size_t var, unsigned left, unsigned total) -> void {
    if (var == brownian_dim) {
      if (left == 0 && total > 0) monomials.push_back(e);
      return;
    }
    for (unsigned p = left + 1; p-- > 0;) {
      e[var] = p;
      self(self, var + 1, left - p, total);
    }
    e[var] = 0;
  };
  for (unsigned total = 1; total <= degree; ++total) recurse(recurse, 0, total, total);

  const std::size_t block = monomials.size();
  const std::size_t extra = block + (regimes - 1) * (block + 1);
  auto fn = [monomials, block, regimes](std::size_t, std::span<const double> w, std::size_t regime,
                                        std::span<double> out) {
    for (std::size_t k = 0; k < block; ++k) {
      double v = 1.0;
      for (std::size_t j = 0; j < w.size(); ++j)
        for (unsigned p = 0; p < monomials[k][j]; ++p) v *= w[j];
      out[k] = v;
    }
    for (std::size_t r = 1; r < regimes; ++r) {
      const double ind = regime == r ? 1.0 : 0.0;
      double* slot = out.data() + block + (r - 1) * (block + 1);
      slot[0] = ind;
      for (std::size_t k = 0; k < block; ++k) slot[k + 1] = ind * out[k];
    }
  };
  return RegressionBasis(extra, std::move(fn));
}

void RegressionBasis::features(std::size_t node, std::span<const double> w, std::size_t regime,
                               std::span<double> out) const {
  out[0] = 1.0;
  if (extra_ > 0) fn_(node, w, regime, out.subspan(1, extra_));
}

Eigen::MatrixXd RegressionBasis::design(const ScenarioBatch& batch, std::size_t node) const {
  const std::size_t m = batch.paths();
  const std::size_t p = feature_count();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  std::vector<double> row(p);
  for (std::size_t path = 0; path < m; ++path) {
    features(node, batch.brownian(node, path), batch.regime(node, path), row);
    for (std::size_t k = 0; k < p; ++k) {
      if (!std::isfinite(row[k])) {
        throw NumericalError("regression", static_cast<std::ptrdiff_t>(node),
                             "non-finite feature value");
      }
      x(static_cast<Eigen::Index>(path), static_cast<Eigen::Index>(k)) = row[k];
    }
  }
  return x;
}

ConditionalExpectation::ConditionalExpectation(const Eigen::MatrixXd& design, bool mean_only,
                                               double ridge_scale)
    : paths_(static_cast<std::size_t>(design.rows())),
      features_(static_cast<std::size_t>(design.cols())),
      mean_only_(mean_only || design.cols() <= 1) {
  if (paths_ == 0) throw ConfigError("paths", "regression needs at least one path");
  if (!mean_only_ && paths_ < features_) {
    throw ConfigError("paths", "path count " + std::to_string(paths_) +
                                   " is below the feature count " + std::to_string(features_));
  }
  if (mean_only_) return;
  const Eigen::Index m = design.rows();
  const Eigen::Index q = design.cols() - 1;
  means_ = Eigen::RowVectorXd::Zero(q);
  for (Eigen::Index i = 0; i < m; ++i) means_ += design.row(i).tail(q);
  means_ /= static_cast<double>(m);
  centred_ = design.rightCols(q).rowwise() - means_;
  Eigen::MatrixXd gram = centred_.transpose() * centred_;
  const double trace = gram.trace();
  if (!(trace > 0.0)) {
    // Every non-constant feature is constant across paths: nothing left to regress on.
    mean_only_ = true;
    centred_.resize(0, 0);
    return;
  }
  ridge_ = ridge_scale * trace / static_cast<double>(q);
  gram.diagonal().array() += ridge_;
  llt_.compute(gram);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("regression", -1, "rank-deficient design after ridge regularization");
  }
}

RegressionFit ConditionalExpectation::fit(std::span<const double> targets) const {
  if (targets.size() != paths_) throw InternalError("regression target length mismatch");
  const Eigen::Index m = static_cast<Eigen::Index>(paths_);
  const double shift = targets[0];
  Eigen::VectorXd r(m);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    r(i) = targets[static_cast<std::size_t>(i)] - shift;
    sum += r(i);
  }
  const double rbar = sum / static_cast<double>(m);
  RegressionFit out;
  out.ridge = ridge_;
  out.fitted.resize(paths_);
  out.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features_));
  if (mean_only_) {
    for (auto& v : out.fitted) v = shift + rbar;
    out.coefficients(0) = shift + rbar;
    return out;
  }
  r.array() -= rbar;
  const Eigen::VectorXd beta = llt_.solve(centred_.transpose() * r);
  if (!beta.allFinite()) throw NumericalError("regression", -1, "non-finite coefficients");
  const Eigen::VectorXd adj = centred_ * beta;
  for (Eigen::Index i = 0; i < m; ++i) out.fitted[static_cast<std::size_t>(i)] = shift + rbar + adj(i);
  out.coefficients(0) = shift + rbar - means_.dot(beta);
  out.coefficients.tail(beta.size()) = beta;
  return out;
}

RegressionFit regress_conditional(std::span<const double> targets, const Eigen::MatrixXd& design,
                                  bool mean_only) {
  return ConditionalExpectation(design, mean_only).fit(targets);
}

}  // namespace bsde
