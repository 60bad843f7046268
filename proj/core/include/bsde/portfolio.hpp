#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsde/model.hpp"
#include "bsde/scalar_solver.hpp"
#include "bsde/scenario.hpp"
#include "bsde/stats.hpp"

namespace bsde {

/// Per-regime market coefficients as polynomials in t:
/// b(t) = sum_p drift[p] t^p (m-vectors), sigma(t) = sum_p volatility[p] t^p (m x d).
struct RegimeCoefficients {
  std::vector<Eigen::VectorXd> drift;
  std::vector<Eigen::MatrixXd> volatility;

  Eigen::VectorXd drift_at(double t) const;
  Eigen::MatrixXd volatility_at(double t) const;
  bool constant_in_time() const { return drift.size() <= 1 && volatility.size() <= 1; }
};

/// zeta(l) = scale * exp(vol * W_T^{brownian_index}); deterministic when vol == 0.
struct TerminalFactor {
  double scale = 1.0;
  double vol = 0.0;
  std::size_t brownian_index = 0;

  double at(const ScenarioBatch& batch, std::size_t path) const;
  bool deterministic() const { return vol == 0.0; }
};

struct MarketSpec {
  ChainGenerator chain = ChainGenerator::single_regime();
  std::vector<RegimeCoefficients> regimes;
  std::vector<TerminalFactor> zeta;
  double gamma = 0.5;
  double wealth = 1.0;
  std::size_t initial_regime = 0;
  double mu = 1e-6;      // non-degeneracy constant: sigma sigma' >= mu I
  double bound_d = 0.0;  // 1/D <= zeta(l) <= D for deterministic zeta; 0 disables the check
  double horizon = 1.0;

  std::size_t regime_count() const { return chain.states(); }
  std::size_t stocks() const;
  std::size_t brownian_dim() const;
  /// delta = 2 gamma / (1 - gamma).
  double delta() const { return 2.0 * gamma / (1.0 - gamma); }
  /// lambda(t, l) = sigma' (sigma sigma')^{-1} b.
  Eigen::VectorXd lambda(double t, std::size_t regime) const;

  /// Shapes, gamma in (0,1) with gamma != 1/3, x > 0, l0 in range, zeta bounds, and
  /// sigma sigma' >= mu I at five probe times per regime. Throws ConfigError.
  void validate() const;
};

/// lambda(t, l) with a per-regime cache: permanent when coefficients do not depend on t,
/// otherwise keyed on the last t requested. Not safe for concurrent use.
class LambdaProvider {
 public:
  explicit LambdaProvider(const MarketSpec& market);
  const Eigen::VectorXd& operator()(double t, std::size_t regime) const;
  double sup_norm_sq(double t) const;

 private:
  std::shared_ptr<const MarketSpec> market_;
  bool constant_;
  mutable std::vector<Eigen::VectorXd> cache_;
  mutable std::vector<double> cached_t_;
};

/// The untransformed system: H^l = (gamma y^l / (2(1-gamma))) |lambda(t,l)' + z^l / y^l|^2
/// + sum_j q^{lj} y^j. Its coupling part can be negative, so it is not solved directly.
GeneratorSystemSpec build_generator_system(const MarketSpec& market);

/// xi = (zeta(1)^gamma, ..., zeta(k)^gamma).
TerminalSpec build_terminal(const MarketSpec& market);

struct TransformedSystem {
  GeneratorSystemSpec generator;
  TerminalSpec terminal;
};

/// y^l = Y^l e^{q^{ll} t}: terminal xi^l e^{q^{ll} T}; driver
/// (gamma y^l / (2(1-gamma))) |lambda' + z^l / y^l|^2 + sum_{j != l} q^{lj} e^{(q^{ll} - q^{jj}) t} max(y^j, 0).
/// Envelope: A = max_l sum_{j != l} q^{lj} e^{(max q^{ll} - min q^{jj}) T}, delta = 2 gamma / (1 - gamma),
/// alpha = 0, beta(t) = gamma max_l |lambda(t,l)|^2 / (1 - gamma).
TransformedSystem build_transformed_system(const MarketSpec& market);

/// Y^l = y^l e^{-q^{ll} t}, Z^l = z^l e^{-q^{ll} t}, nodewise.
std::vector<BsdeSolutionGrid> untransform_solution(std::span<const BsdeSolutionGrid> transformed,
                                                   const ChainGenerator& chain);
/// Inverse of untransform_solution.
std::vector<BsdeSolutionGrid> transform_solution(std::span<const BsdeSolutionGrid> original,
                                                 const ChainGenerator& chain);

/// Volatility-adjusted weights p(t_i, path) in R^{1 x d}, layout steps x paths x d.
struct StrategyGrid {
  std::size_t steps = 0;
  std::size_t paths = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::size_t flagged_nodes = 0;  // nodes where Y was at or below the floor

  std::span<const double> at(std::size_t step, std::size_t path) const {
    return {values.data() + (step * paths + path) * dim, dim};
  }
  std::span<double> at(std::size_t step, std::size_t path) {
    return {values.data() + (step * paths + path) * dim, dim};
  }
  StrategyGrid scaled(double factor) const;
  double sup_norm() const;
};

/// p*(t, path) = (lambda(t, l)' + Z^l / Y^l) / (1 - gamma) with l the path's regime at the left
/// node. `solution` holds the untransformed components, one per regime.
StrategyGrid optimal_strategy(std::span<const BsdeSolutionGrid> solution, const MarketSpec& market,
                              const ScenarioBatch& batch, double floor = 1e-8);

/// The same constant weight vector for every regime.
StrategyGrid constant_strategy(const Eigen::VectorXd& weights, const ScenarioBatch& batch);
/// Weights that depend only on the path's current regime.
StrategyGrid regime_feedback_strategy(const std::vector<Eigen::VectorXd>& weights,
                                      const ScenarioBatch& batch);

struct WealthGrid {
  std::size_t paths = 0;
  std::vector<double> wealth;   // nodes x paths
  std::vector<double> utility;  // (X_T zeta(alpha_T))^gamma / gamma per path

  double terminal(std::size_t path, std::size_t nodes) const { return wealth[(nodes - 1) * paths + path]; }
};

/// X_{i+1} = X_i exp(p lambda dt - |p|^2 dt / 2 + p dW). Throws NumericalError on non-finite
/// strategy entries.
WealthGrid simulate_wealth(double x, const StrategyGrid& strategy, const ScenarioBatch& batch,
                           const MarketSpec& market, unsigned threads = 1);

/// Sample mean and standard error of the terminal utilities.
MeanEstimate estimate_utility(const WealthGrid& wealth, const MarketSpec& market);

struct StrategyPerturbation {
  std::string label;
  std::function<StrategyGrid(const StrategyGrid& optimal)> make;
};

/// p* scaled by {0, 0.5, 0.8, 1.2, 1.5}, and the constant lambda(0, l0)' / (1 - gamma).
std::vector<StrategyPerturbation> default_perturbations(const MarketSpec& market,
                                                        const ScenarioBatch& batch);

/// CSV rows "label,regime,p_1,...,p_d" defining regime-feedback strategies.
std::vector<StrategyPerturbation> load_strategy_file(const std::filesystem::path& file,
                                                     const MarketSpec& market,
                                                     const ScenarioBatch& batch);

struct UtilityRow {
  std::string label;
  double utility = 0.0;
  double stderr_value = 0.0;
  double value_bsde = 0.0;
  /// (V_bsde - utility) / stderr.
  double gap_sigmas = 0.0;
  bool dominated = true;  // utility <= V_bsde + 3 stderr
};

struct VerificationReport {
  double y0 = 0.0;
  double value_bsde = 0.0;  // x^gamma / gamma * Y_0^{l0}
  UtilityRow optimal;
  bool equality_pass = false;  // |utility(p*) - V_bsde| <= 3 stderr
  std::vector<UtilityRow> perturbations;
  bool dominance_pass = false;
  /// Admissibility diagnostics (heuristic; class (D) is not decidable numerically).
  double strategy_sup = 0.0;
  double q_martingale_mean = 0.0;  // E^Q[X_T / x] under dQ/dP = E(-lambda . W)
  double q_martingale_stderr = 0.0;
  std::size_t flagged_nodes = 0;

  bool pass() const { return equality_pass && dominance_pass; }
};

/// Compares the BSDE value with simulated utilities of p* and every perturbation on `batch`.
VerificationReport verify_optimality(const MarketSpec& market,
                                     std::span<const BsdeSolutionGrid> solution,
                                     std::span<const StrategyPerturbation> perturbations,
                                     const ScenarioBatch& batch, double sigmas = 3.0,
                                     unsigned threads = 1);

}  // namespace bsde
