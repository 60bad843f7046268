#include "bsde/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bsde/coefficients.hpp"
#include "bsde/errors.hpp"
#include "bsde/rng.hpp"

namespace bsde {

namespace {

template <typename T>
T horner(const std::vector<T>& coeffs, double t, const T& zero) {
  if (coeffs.empty()) return zero;
  T acc = coeffs.back();
  for (std::size_t p = coeffs.size() - 1; p-- > 0;) acc = (acc * t + coeffs[p]).eval();
  return acc;
}

std::vector<double> probe_times(double horizon, std::size_t count = 5) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = horizon * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return out;
}

void require_shapes(const StrategyGrid& s, const ScenarioBatch& batch) {
  if (s.steps != batch.grid().steps() || s.paths != batch.paths() || s.dim != batch.brownian_dim()) {
    throw InternalError("strategy grid does not match the scenario batch");
  }
}

}  // namespace

Eigen::VectorXd RegimeCoefficients::drift_at(double t) const {
  const Eigen::Index m = drift.empty() ? 0 : drift.front().size();
  return horner(drift, t, Eigen::VectorXd(Eigen::VectorXd::Zero(m)));
}

Eigen::MatrixXd RegimeCoefficients::volatility_at(double t) const {
  const Eigen::Index r = volatility.empty() ? 0 : volatility.front().rows();
  const Eigen::Index c = volatility.empty() ? 0 : volatility.front().cols();
  return horner(volatility, t, Eigen::MatrixXd(Eigen::MatrixXd::Zero(r, c)));
}

double TerminalFactor::at(const ScenarioBatch& batch, std::size_t path) const {
  if (vol == 0.0) return scale;
  const std::size_t last = batch.grid().steps();
  return scale * std::exp(vol * batch.brownian(last, path)[brownian_index]);
}

std::size_t MarketSpec::stocks() const {
  if (regimes.empty() || regimes.front().volatility.empty()) return 0;
  return static_cast<std::size_t>(regimes.front().volatility.front().rows());
}

std::size_t MarketSpec::brownian_dim() const {
  if (regimes.empty() || regimes.front().volatility.empty()) return 0;
  return static_cast<std::size_t>(regimes.front().volatility.front().cols());
}

Eigen::VectorXd MarketSpec::lambda(double t, std::size_t regime) const {
  const RegimeCoefficients& c = regimes.at(regime);
  return market_price_of_risk(c.drift_at(t), c.volatility_at(t));
}

void MarketSpec::validate() const {
  const std::size_t k = regime_count();
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("market.gamma", "must lie in (0, 1)");
  if (std::abs(gamma - 1.0 / 3.0) < 1e-12) {
    throw ConfigError("market.gamma", "gamma = 1/3 gives delta = 1, which is excluded");
  }
  if (!(wealth > 0.0) || !std::isfinite(wealth)) throw ConfigError("market.wealth", "must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("market.horizon", "must be positive");
  if (initial_regime >= k) throw ConfigError("market.initial_regime", "outside the regime range");
  if (regimes.size() != k) {
    throw ConfigError("market.regimes", "expected one coefficient set per chain state");
  }
  if (zeta.size() != k) throw ConfigError("market.zeta", "expected one entry per chain state");
  const std::size_t m = stocks();
  const std::size_t d = brownian_dim();
  if (m == 0 || d == 0) throw ConfigError("market.regimes", "volatility must be a nonempty matrix");
  if (m > d) throw ConfigError("market.regimes", "more stocks than Brownian motions");
  for (std::size_t l = 0; l < k; ++l) {
    const std::string where = "market.regimes[" + std::to_string(l) + "]";
    if (regimes[l].drift.empty() || regimes[l].volatility.empty()) {
      throw ConfigError(where, "drift and volatility are required");
    }
    for (const auto& b : regimes[l].drift) {
      if (static_cast<std::size_t>(b.size()) != m) throw ConfigError(where + ".drift", "wrong length");
      if (!b.allFinite()) throw ConfigError(where + ".drift", "non-finite entry");
    }
    for (const auto& s : regimes[l].volatility) {
      if (static_cast<std::size_t>(s.rows()) != m || static_cast<std::size_t>(s.cols()) != d) {
        throw ConfigError(where + ".volatility", "wrong shape");
      }
      if (!s.allFinite()) throw ConfigError(where + ".volatility", "non-finite entry");
    }
  }
  for (std::size_t l = 0; l < k; ++l) {
    const TerminalFactor& z = zeta[l];
    const std::string where = "market.zeta[" + std::to_string(l) + "]";
    if (!(z.scale > 0.0) || !std::isfinite(z.scale)) throw ConfigError(where, "scale must be positive");
    if (!std::isfinite(z.vol)) throw ConfigError(where, "vol must be finite");
    if (z.brownian_index >= d) throw ConfigError(where, "brownian index out of range");
    if (bound_d > 0.0 && z.deterministic() && (z.scale < 1.0 / bound_d || z.scale > bound_d)) {
      throw ConfigError(where, "outside [1/D, D]");
    }
  }
  if (bound_d < 0.0) throw ConfigError("market.bound_d", "must be nonnegative");
  if (!(mu > 0.0)) throw ConfigError("market.mu", "must be positive");
  const std::vector<double> times = probe_times(horizon);
  const NondegeneracyReport nd = check_nondegeneracy(
      [this](double t, std::size_t l) { return regimes[l].volatility_at(t); }, times, k, mu);
  if (!nd.pass) {
    std::ostringstream msg;
    msg << "sigma sigma' - mu I has eigenvalue margin " << nd.worst_margin << " at t = " << nd.worst_t
        << ", regime " << nd.worst_regime;
    throw ConfigError("market.mu", msg.str());
  }
}

LambdaProvider::LambdaProvider(const MarketSpec& market)
    : market_(std::make_shared<const MarketSpec>(market)), constant_(true) {
  for (const auto& c : market.regimes) constant_ = constant_ && c.constant_in_time();
  for (std::size_t l = 0; l < market.regime_count(); ++l) cache_.push_back(market.lambda(0.0, l));
  cached_t_.assign(market.regime_count(), 0.0);
}

const Eigen::VectorXd& LambdaProvider::operator()(double t, std::size_t regime) const {
  if (constant_ || cached_t_.at(regime) == t) return cache_.at(regime);
  cache_[regime] = market_->lambda(t, regime);
  cached_t_[regime] = t;
  return cache_[regime];
}

double LambdaProvider::sup_norm_sq(double t) const {
  double best = 0.0;
  for (std::size_t l = 0; l < market_->regime_count(); ++l) {
    best = std::max(best, (*this)(t, l).squaredNorm());
  }
  return best;
}

namespace {

/// c |y lambda + z|^2 / y with c = gamma / (2 (1 - gamma)).
DiagonalFn merton_diagonal(std::shared_ptr<const LambdaProvider> lam, std::size_t component,
                           double gamma) {
  const double c = gamma / (2.0 * (1.0 - gamma));
  return [lam, component, c](const EvalContext& ctx, double y, std::span<const double> z) {
    const Eigen::VectorXd& l = (*lam)(ctx.t, component);
    double sq = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double v = y * l[static_cast<Eigen::Index>(j)] + z[j];
      sq += v * v;
    }
    return c * sq / y;
  };
}

GrowthEnvelope merton_envelope(const MarketSpec& market, std::shared_ptr<const LambdaProvider> lam,
                               double lipschitz) {
  GrowthEnvelope env;
  env.lipschitz = lipschitz;
  env.singularity = market.delta();
  const double g = market.gamma;
  env.beta = [lam, g](double t, std::size_t) { return g * lam->sup_norm_sq(t) / (1.0 - g); };
  return env;
}

}  // namespace

GeneratorSystemSpec build_generator_system(const MarketSpec& market) {
  market.validate();
  const std::size_t k = market.regime_count();
  auto lam = std::make_shared<const LambdaProvider>(market);
  const Eigen::MatrixXd q = market.chain.rates();
  std::vector<CouplingFn> coupling(k);
  std::vector<DiagonalFn> diagonal(k);
  double lipschitz = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    lipschitz = std::max(lipschitz, q.row(static_cast<Eigen::Index>(l)).cwiseAbs().sum());
    if (k > 1) {
      const Eigen::VectorXd row = q.row(static_cast<Eigen::Index>(l)).transpose();
      coupling[l] = [row](const EvalContext&, std::span<const double> y) {
        double s = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) s += row[static_cast<Eigen::Index>(j)] * y[j];
        return s;
      };
    }
    diagonal[l] = merton_diagonal(lam, l, market.gamma);
  }
  return GeneratorSystemSpec(k, market.brownian_dim(), std::move(coupling), std::move(diagonal),
                             merton_envelope(market, lam, lipschitz));
}

TerminalSpec build_terminal(const MarketSpec& market) {
  TerminalSpec spec;
  spec.dimension = market.regime_count();
  const std::vector<TerminalFactor> zeta = market.zeta;
  const double g = market.gamma;
  spec.sampler = [zeta, g](const ScenarioBatch& batch, std::size_t path, std::span<double> out) {
    for (std::size_t l = 0; l < zeta.size(); ++l) out[l] = std::pow(zeta[l].at(batch, path), g);
  };
  return spec;
}

TransformedSystem build_transformed_system(const MarketSpec& market) {
  market.validate();
  const std::size_t k = market.regime_count();
  auto lam = std::make_shared<const LambdaProvider>(market);
  const Eigen::MatrixXd q = market.chain.rates();
  const double qmax = q.diagonal().maxCoeff();
  const double qmin = q.diagonal().minCoeff();
  const double spread = std::exp((qmax - qmin) * market.horizon);

  std::vector<CouplingFn> coupling(k);
  std::vector<DiagonalFn> diagonal(k);
  double lipschitz = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    double off = 0.0;
    bool any = false;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (j != li) {
        off += q(li, j);
        any = any || q(li, j) != 0.0;
      }
    }
    lipschitz = std::max(lipschitz, off * spread);
    if (any) {
      const Eigen::VectorXd row = q.row(li).transpose();
      const Eigen::VectorXd diag = q.diagonal();
      coupling[l] = [row, diag, li](const EvalContext& ctx, std::span<const double> y) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < row.size(); ++j) {
          if (j == li || row[j] == 0.0) continue;
          s += row[j] * std::exp((diag[li] - diag[j]) * ctx.t) *
               std::max(y[static_cast<std::size_t>(j)], 0.0);
        }
        return s;
      };
    }
    diagonal[l] = merton_diagonal(lam, l, market.gamma);
  }

  TransformedSystem out{
      GeneratorSystemSpec(k, market.brownian_dim(), std::move(coupling), std::move(diagonal),
                          merton_envelope(market, lam, lipschitz)),
      TerminalSpec{}};
  out.terminal.dimension = k;
  const std::vector<TerminalFactor> zeta = market.zeta;
  const double g = market.gamma;
  Eigen::VectorXd growth(static_cast<Eigen::Index>(k));
  for (std::size_t l = 0; l < k; ++l) {
    growth[static_cast<Eigen::Index>(l)] = std::exp(q(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l)) * market.horizon);
  }
  out.terminal.sampler = [zeta, g, growth](const ScenarioBatch& batch, std::size_t path,
                                           std::span<double> res) {
    for (std::size_t l = 0; l < zeta.size(); ++l) {
      res[l] = std::pow(zeta[l].at(batch, path), g) * growth[static_cast<Eigen::Index>(l)];
    }
  };
  return out;
}

namespace {

std::vector<BsdeSolutionGrid> rescale(std::span<const BsdeSolutionGrid> in, const ChainGenerator& chain,
                                      double sign) {
  if (in.size() != chain.states()) throw InternalError("component count does not match the chain");
  std::vector<BsdeSolutionGrid> out(in.begin(), in.end());
  for (std::size_t l = 0; l < out.size(); ++l) {
    BsdeSolutionGrid& s = out[l];
    const double q = chain.rate(l, l);
    s.coefficients.clear();
    if (q == 0.0) continue;
    const std::size_t m = s.paths;
    for (std::size_t node = 0; node < s.grid.node_count(); ++node) {
      const double f = std::exp(sign * q * s.grid[node]);
      for (std::size_t path = 0; path < m; ++path) s.y[node * m + path] *= f;
      if (node < s.grid.steps()) {
        for (std::size_t idx = node * m * s.dim; idx < (node + 1) * m * s.dim; ++idx) s.z[idx] *= f;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<BsdeSolutionGrid> untransform_solution(std::span<const BsdeSolutionGrid> transformed,
                                                   const ChainGenerator& chain) {
  return rescale(transformed, chain, -1.0);
}

std::vector<BsdeSolutionGrid> transform_solution(std::span<const BsdeSolutionGrid> original,
                                                 const ChainGenerator& chain) {
  return rescale(original, chain, 1.0);
}

StrategyGrid StrategyGrid::scaled(double factor) const {
  StrategyGrid out = *this;
  for (double& v : out.values) v *= factor;
  return out;
}

double StrategyGrid::sup_norm() const {
  double best = 0.0;
  for (std::size_t i = 0; i < steps * paths; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += values[i * dim + j] * values[i * dim + j];
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

StrategyGrid optimal_strategy(std::span<const BsdeSolutionGrid> solution, const MarketSpec& market,
                              const ScenarioBatch& batch, double floor) {
  const std::size_t k = market.regime_count();
  if (solution.size() != k) throw InternalError("one solution component per regime is required");
  const std::size_t m = batch.paths();
  const std::size_t d = batch.brownian_dim();
  const TimeGrid& grid = batch.grid();
  for (const auto& s : solution) {
    if (s.paths != m || s.dim != d || !(s.grid == grid)) {
      throw InternalError("solution grid does not match the scenario batch");
    }
  }
  const LambdaProvider lam(market);
  const double inv = 1.0 / (1.0 - market.gamma);
  StrategyGrid out;
  out.steps = grid.steps();
  out.paths = m;
  out.dim = d;
  out.values.assign(out.steps * m * d, 0.0);
  for (std::size_t step = 0; step < out.steps; ++step) {
    for (std::size_t path = 0; path < m; ++path) {
      const std::size_t r = batch.regime(step, path);
      const Eigen::VectorXd& l = lam(grid[step], r);
      const double y = solution[r].y_at(step, path);
      const auto z = solution[r].z_at(step, path);
      std::span<double> p = out.at(step, path);
      const bool flagged = !(y > floor);
      if (flagged) ++out.flagged_nodes;
      for (std::size_t j = 0; j < d; ++j) {
        const double zy = flagged ? 0.0 : z[j] / y;
        p[j] = (l[static_cast<Eigen::Index>(j)] + zy) * inv;
      }
    }
  }
  return out;
}

StrategyGrid constant_strategy(const Eigen::VectorXd& weights, const ScenarioBatch& batch) {
  return regime_feedback_strategy(std::vector<Eigen::VectorXd>(batch.regime_count(), weights), batch);
}

StrategyGrid regime_feedback_strategy(const std::vector<Eigen::VectorXd>& weights,
                                      const ScenarioBatch& batch) {
  const std::size_t d = batch.brownian_dim();
  if (weights.size() != batch.regime_count()) {
    throw ConfigError("strategy", "expected one weight vector per regime");
  }
  for (const auto& w : weights) {
    if (static_cast<std::size_t>(w.size()) != d) throw ConfigError("strategy", "weight vector has wrong length");
  }
  StrategyGrid out;
  out.steps = batch.grid().steps();
  out.paths = batch.paths();
  out.dim = d;
  out.values.assign(out.steps * out.paths * d, 0.0);
  for (std::size_t step = 0; step < out.steps; ++step) {
    for (std::size_t path = 0; path < out.paths; ++path) {
      const Eigen::VectorXd& w = weights[batch.regime(step, path)];
      std::span<double> p = out.at(step, path);
      for (std::size_t j = 0; j < d; ++j) p[j] = w[static_cast<Eigen::Index>(j)];
    }
  }
  return out;
}

WealthGrid simulate_wealth(double x, const StrategyGrid& strategy, const ScenarioBatch& batch,
                           const MarketSpec& market, unsigned threads) {
  require_shapes(strategy, batch);
  if (!(x > 0.0)) throw ConfigError("market.wealth", "must be positive");
  for (std::size_t i = 0; i < strategy.values.size(); ++i) {
    if (!std::isfinite(strategy.values[i])) {
      const std::size_t step = i / (strategy.paths * strategy.dim);
      throw NumericalError("portfolio-app", static_cast<std::ptrdiff_t>(step),
                           "strategy is not finite");
    }
  }
  const TimeGrid& grid = batch.grid();
  const std::size_t m = batch.paths();
  const std::size_t d = batch.brownian_dim();
  const std::size_t steps = grid.steps();
  const double dt = grid.dt();
  const double g = market.gamma;
  const LambdaProvider lam(market);
  // lambda per (step, regime), so worker threads never touch the provider's cache
  std::vector<Eigen::VectorXd> table(steps * market.regime_count());
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t r = 0; r < market.regime_count(); ++r) table[step * market.regime_count() + r] = lam(grid[step], r);
  }

  WealthGrid out;
  out.paths = m;
  out.wealth.assign(grid.node_count() * m, 0.0);
  out.utility.assign(m, 0.0);
  const std::size_t blocks = (m + kPathBlockSize - 1) / kPathBlockSize;
  parallel_for_blocks(blocks, threads, [&](std::size_t block) {
    const std::size_t lo = block * kPathBlockSize;
    const std::size_t hi = std::min(m, lo + kPathBlockSize);
    for (std::size_t path = lo; path < hi; ++path) {
      double logx = 0.0;  // log(X / x), so X stays exactly linear in x
      out.wealth[path] = x;
      for (std::size_t step = 0; step < steps; ++step) {
        const Eigen::VectorXd& l = table[step * market.regime_count() + batch.regime(step, path)];
        const auto p = strategy.at(step, path);
        const auto dw = batch.increment(step, path);
        double drift = 0.0, sq = 0.0, noise = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          drift += p[j] * l[static_cast<Eigen::Index>(j)];
          sq += p[j] * p[j];
          noise += p[j] * dw[j];
        }
        logx += (drift - 0.5 * sq) * dt + noise;
        out.wealth[(step + 1) * m + path] = x * std::exp(logx);
      }
      const double zt = market.zeta[batch.regime(steps, path)].at(batch, path);
      out.utility[path] = std::pow(out.wealth[steps * m + path] * zt, g) / g;
    }
  });
  for (std::size_t path = 0; path < m; ++path) {
    if (!std::isfinite(out.utility[path])) {
      throw NumericalError("portfolio-app", static_cast<std::ptrdiff_t>(steps),
                           "non-finite terminal utility on path " + std::to_string(path));
    }
  }
  return out;
}

MeanEstimate estimate_utility(const WealthGrid& wealth, const MarketSpec& market) {
  if (!(market.gamma > 0.0 && market.gamma < 1.0)) throw ConfigError("market.gamma", "must lie in (0, 1)");
  return mean_estimate(wealth.utility);
}

std::vector<StrategyPerturbation> default_perturbations(const MarketSpec& market,
                                                        const ScenarioBatch& batch) {
  std::vector<StrategyPerturbation> out;
  for (double s : {0.0, 0.5, 0.8, 1.2, 1.5}) {
    std::ostringstream label;
    label << "scaled_" << s;
    out.push_back({label.str(), [s](const StrategyGrid& opt) { return opt.scaled(s); }});
  }
  const Eigen::VectorXd w = market.lambda(0.0, market.initial_regime) / (1.0 - market.gamma);
  const ScenarioBatch* b = &batch;
  out.push_back({"constant_initial_merton", [w, b](const StrategyGrid&) { return constant_strategy(w, *b); }});
  return out;
}

std::vector<StrategyPerturbation> load_strategy_file(const std::filesystem::path& file,
                                                     const MarketSpec& market,
                                                     const ScenarioBatch& batch) {
  std::ifstream in(file);
  if (!in) throw ConfigError("verification.strategy_file", "cannot open " + file.string());
  const std::size_t k = market.regime_count();
  const std::size_t d = batch.brownian_dim();
  std::vector<std::string> order;
  std::map<std::string, std::vector<Eigen::VectorXd>> weights;
  std::map<std::string, std::vector<bool>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "verification.strategy_file:" + std::to_string(lineno);
    if (cells.size() != 2 + d) throw ConfigError(where, "expected label,regime,p_1..p_d");
    if (cells[0] == "label") continue;  // header
    std::size_t regime = 0;
    Eigen::VectorXd p(static_cast<Eigen::Index>(d));
    try {
      regime = static_cast<std::size_t>(std::stoul(cells[1]));
      for (std::size_t j = 0; j < d; ++j) p[static_cast<Eigen::Index>(j)] = std::stod(cells[2 + j]);
    } catch (const std::exception&) {
      throw ConfigError(where, "not a number");
    }
    if (regime >= k) throw ConfigError(where, "regime out of range");
    if (!weights.count(cells[0])) {
      order.push_back(cells[0]);
      weights[cells[0]].assign(k, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
      seen[cells[0]].assign(k, false);
    }
    weights[cells[0]][regime] = p;
    seen[cells[0]][regime] = true;
  }
  std::vector<StrategyPerturbation> out;
  for (const auto& label : order) {
    for (std::size_t r = 0; r < k; ++r) {
      if (!seen[label][r]) {
        throw ConfigError("verification.strategy_file",
                          "strategy '" + label + "' has no row for regime " + std::to_string(r));
      }
    }
    const std::vector<Eigen::VectorXd> w = weights[label];
    const ScenarioBatch* b = &batch;
    out.push_back({label, [w, b](const StrategyGrid&) { return regime_feedback_strategy(w, *b); }});
  }
  return out;
}

VerificationReport verify_optimality(const MarketSpec& market,
                                     std::span<const BsdeSolutionGrid> solution,
                                     std::span<const StrategyPerturbation> perturbations,
                                     const ScenarioBatch& batch, double sigmas, unsigned threads) {
  const std::size_t l0 = market.initial_regime;
  if (solution.size() != market.regime_count()) {
    throw InternalError("one solution component per regime is required");
  }
  VerificationReport rep;
  rep.y0 = solution[l0].y0();
  rep.value_bsde = std::pow(market.wealth, market.gamma) / market.gamma * rep.y0;

  const StrategyGrid opt = optimal_strategy(solution, market, batch);
  rep.flagged_nodes = opt.flagged_nodes;
  rep.strategy_sup = opt.sup_norm();

  auto evaluate = [&](const std::string& label, const StrategyGrid& s, WealthGrid* keep) {
    WealthGrid w = simulate_wealth(market.wealth, s, batch, market, threads);
    const MeanEstimate u = estimate_utility(w, market);
    UtilityRow row;
    row.label = label;
    row.utility = u.mean;
    row.stderr_value = u.stderr_value;
    row.value_bsde = rep.value_bsde;
    row.gap_sigmas = u.stderr_value > 0.0 ? (rep.value_bsde - u.mean) / u.stderr_value
                                          : (rep.value_bsde - u.mean >= 0.0 ? 0.0 : -INFINITY);
    row.dominated = u.mean <= rep.value_bsde + sigmas * u.stderr_value;
    if (keep) *keep = std::move(w);
    return row;
  };

  WealthGrid optimal_wealth;
  rep.optimal = evaluate("optimal", opt, &optimal_wealth);
  rep.equality_pass =
      std::abs(rep.optimal.utility - rep.value_bsde) <= sigmas * rep.optimal.stderr_value ||
      (rep.optimal.stderr_value == 0.0 &&
       std::abs(rep.optimal.utility - rep.value_bsde) <= 1e-12 * std::abs(rep.value_bsde));
  rep.dominance_pass = true;
  for (const auto& p : perturbations) {
    rep.perturbations.push_back(evaluate(p.label, p.make(opt), nullptr));
    rep.dominance_pass = rep.dominance_pass && rep.perturbations.back().dominated;
  }

  // E^Q[X_T / x] with dQ/dP = exp(-sum lambda dW - sum |lambda|^2 dt / 2)
  const TimeGrid& grid = batch.grid();
  const std::size_t m = batch.paths();
  const std::size_t d = batch.brownian_dim();
  const LambdaProvider lam(market);
  std::vector<double> ratio(m);
  for (std::size_t path = 0; path < m; ++path) {
    double logl = 0.0;
    for (std::size_t step = 0; step < grid.steps(); ++step) {
      const Eigen::VectorXd& l = lam(grid[step], batch.regime(step, path));
      const auto dw = batch.increment(step, path);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += l[static_cast<Eigen::Index>(j)] * dw[j];
      logl += -dot - 0.5 * l.squaredNorm() * grid.dt();
    }
    ratio[path] = std::exp(logl) * optimal_wealth.terminal(path, grid.node_count()) / market.wealth;
  }
  const MeanEstimate q = mean_estimate(ratio);
  rep.q_martingale_mean = q.mean;
  rep.q_martingale_stderr = q.stderr_value;
  return rep;
}

}  // namespace bsde
