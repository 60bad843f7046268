#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "bsde/picard.hpp"
#include "bsde/portfolio.hpp"
#include "bsde/regression.hpp"
#include "bsde/scalar_solver.hpp"
#include "bsde/scenario.hpp"

namespace {

using namespace bsde;

MarketSpec two_regime_market() {
  MarketSpec m;
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  m.chain = ChainGenerator(q);
  for (double b : {0.1, 0.2}) {
    RegimeCoefficients c;
    c.drift.push_back(Eigen::VectorXd::Constant(1, b));
    c.volatility.push_back(Eigen::MatrixXd::Constant(1, 1, 0.5));
    m.regimes.push_back(c);
    m.zeta.push_back(TerminalFactor{});
  }
  m.mu = 0.01;
  return m;
}

void BM_SimulateBatch(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const MarketSpec m = two_regime_market();
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_batch(make_time_grid(1.0, 50), 1, paths, m.chain, 0, 7));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 50);
}
BENCHMARK(BM_SimulateBatch)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_RegressionFit(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const MarketSpec m = two_regime_market();
  const ScenarioBatch b = simulate_batch(make_time_grid(1.0, 10), 1, paths, m.chain, 0, 7);
  const RegressionBasis basis = RegressionBasis::polynomial(1, 2);
  std::vector<double> target(paths);
  for (std::size_t p = 0; p < paths; ++p) target[p] = std::exp(b.brownian(10, p)[0]);
  for (auto _ : state) {
    const ConditionalExpectation cond(basis.design(b, 5));
    benchmark::DoNotOptimize(cond.fit(target));
  }
}
BENCHMARK(BM_RegressionFit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_ScalarSolve(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const ScenarioBatch b =
      simulate_batch(make_time_grid(1.0, 50), 1, paths, ChainGenerator::single_regime(), 0, 7);
  ScalarDriver g;
  g.g = [](const DriverContext&, double y, std::span<const double> z) {
    const double u = 0.2 + z[0] / y;
    return 0.5 * y * u * u;
  };
  std::vector<double> terminal(paths);
  for (std::size_t p = 0; p < paths; ++p) terminal[p] = std::exp(0.1 * b.brownian(50, p)[0]);
  const RegressionBasis basis = RegressionBasis::polynomial(1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_scalar_bsde(g, terminal, b, basis));
}
BENCHMARK(BM_ScalarSolve)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_PicardTwoRegime(benchmark::State& state) {
  const auto paths = static_cast<std::size_t>(state.range(0));
  const MarketSpec m = two_regime_market();
  const TransformedSystem sys = build_transformed_system(m);
  const ScenarioBatch b = simulate_batch(make_time_grid(1.0, 50), 1, paths, m.chain, 0, 7);
  const RegressionBasis basis = RegressionBasis::polynomial(1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(picard_solve(sys.generator, sys.terminal, b, basis));
}
BENCHMARK(BM_PicardTwoRegime)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
