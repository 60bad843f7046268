#include <cmath>
#include <sstream>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include "bsde/errors.hpp"
#include "bsde/picard.hpp"
#include "bsde/portfolio.hpp"
#include "test_support.hpp"

namespace bsde {
namespace {

using big = boost::multiprecision::cpp_dec_float_50;

big big_epsilon(int p, int delta, int a, int n) {
  using boost::multiprecision::pow;
  using boost::multiprecision::sqrt;
  const big P(p), D(delta), A(a), N(n);
  const big denom = (P / (P - 1)) * pow(big(3), (P - 1) / P) * pow(big(2), 1 + D + 1 / P) * pow(A, 2 + D) *
                    pow(N, (2 + D) / 2);
  return 1 / denom;
}

TEST(ContractionHorizon, ZeroLipschitz) {
  const auto h = contraction_horizon(0.0, 2.0, 0.0, 3, 1.0);
  EXPECT_TRUE(std::isinf(h.epsilon));
  EXPECT_EQ(h.m0, 1);
}

TEST(ContractionHorizon, MatchesArbitraryPrecision) {
  const auto h = contraction_horizon(1.0, 2.0, 0.0, 1, 1.0);
  const big eps = big_epsilon(2, 0, 1, 1);
  EXPECT_NEAR(h.epsilon, eps.convert_to<double>(), 1e-16);
  EXPECT_NEAR(h.epsilon, 0.102062, 5e-7);
  EXPECT_EQ(h.m0, 10);
  const big ratio = big(1) / eps;
  EXPECT_EQ(static_cast<long long>(boost::multiprecision::ceil(ratio).convert_to<double>()), h.m0);
}

TEST(ContractionHorizon, OtherParameters) {
  for (int p : {2, 3, 5}) {
    for (int delta : {0, 2, 3}) {
      for (int n : {1, 2, 4}) {
        const auto h = contraction_horizon(1.5, p, delta, static_cast<std::size_t>(n), 2.0);
        using boost::multiprecision::pow;
        const big denom = (big(p) / (p - 1)) * pow(big(3), big(p - 1) / p) * pow(big(2), 1 + big(delta) + big(1) / p) *
                          pow(big(1.5), 2 + big(delta)) * pow(big(n), (2 + big(delta)) / 2);
        const big t_over_eps = 2 * denom;
        EXPECT_NEAR(h.epsilon, (1 / denom).convert_to<double>(), 1e-14 * h.epsilon);
        EXPECT_EQ(h.m0, static_cast<long long>(boost::multiprecision::ceil(t_over_eps).convert_to<double>()));
      }
    }
  }
}

TEST(ContractionHorizon, DoublingHorizon) {
  for (double a : {0.3, 1.0, 2.7}) {
    const auto h1 = contraction_horizon(a, 2.0, 2.0, 2, 1.0);
    const auto h2 = contraction_horizon(a, 2.0, 2.0, 2, 2.0);
    EXPECT_TRUE(h2.m0 == 2 * h1.m0 || h2.m0 == 2 * h1.m0 - 1);
  }
}

TEST(ContractionHorizon, RejectsBadParameters) {
  EXPECT_THROW(contraction_horizon(1.0, 1.0, 0.0, 1, 1.0), ConfigError);
  EXPECT_THROW(contraction_horizon(1.0, 2.0, 1.0, 1, 1.0), ConfigError);
  EXPECT_THROW(contraction_horizon(-1.0, 2.0, 0.0, 1, 1.0), ConfigError);
}

BsdeSolutionGrid tiny_grid(double y, double z) {
  return BsdeSolutionGrid::filled(make_time_grid(1.0, 2), 1, 1, y, z);
}

TEST(IterationDelta, Examples) {
  const std::vector<BsdeSolutionGrid> a{tiny_grid(1.0, 0.0)};
  EXPECT_EQ(iteration_delta(a, a).y_sup, 0.0);
  EXPECT_EQ(iteration_delta(a, a).z_l2, 0.0);
  const std::vector<BsdeSolutionGrid> b{tiny_grid(1.5, 0.0)};
  EXPECT_DOUBLE_EQ(iteration_delta(a, b).y_sup, 0.5);
  const std::vector<BsdeSolutionGrid> c{tiny_grid(1.0, 1.0)};
  EXPECT_DOUBLE_EQ(iteration_delta(a, c).z_l2, 1.0);
  const std::vector<BsdeSolutionGrid> wrong{BsdeSolutionGrid::filled(make_time_grid(1.0, 3), 1, 1, 1.0, 0.0)};
  EXPECT_THROW(iteration_delta(a, wrong), InternalError);
}

TEST(PicardReport, FittedRatio) {
  PicardReport r;
  for (std::size_t i = 0; i < 6; ++i) r.history.push_back({i + 1, std::pow(0.3, static_cast<double>(i)), 0.0, 0.0});
  EXPECT_NEAR(r.fitted_ratio(3), 0.3, 1e-12);
  PicardReport empty;
  EXPECT_TRUE(std::isnan(empty.fitted_ratio()));
}

ScenarioBatch two_regime_batch(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  return simulate_batch(make_time_grid(1.0, steps), 1, paths, ChainGenerator(testing::symmetric_two_state()), 0, seed);
}

TEST(Picard, ZeroCouplingConvergesAfterOneCorrection) {
  const MarketSpec m = testing::constant_lambda_market(Eigen::MatrixXd::Zero(2, 2), {0.2, 0.4});
  const TransformedSystem sys = build_transformed_system(m);
  EXPECT_EQ(sys.generator.envelope().lipschitz, 0.0);
  const auto b = simulate_batch(make_time_grid(1.0, 20), 1, 2000, m.chain, 0, 3);
  const auto basis = RegressionBasis::polynomial(1, 2);
  const PicardResult r = picard_solve(sys.generator, sys.terminal, b, basis);
  ASSERT_EQ(r.report.iterations(), 2u);
  EXPECT_TRUE(r.report.converged);
  EXPECT_EQ(r.report.history[1].delta_y, 0.0);
  EXPECT_EQ(r.report.history[1].delta_z, 0.0);
  EXPECT_EQ(r.report.horizon.m0, 1);
}

TEST(Picard, SingleComponentMatchesScalarSolve) {
  const MarketSpec m = testing::merton_market();
  const TransformedSystem sys = build_transformed_system(m);
  const auto b = simulate_batch(make_time_grid(1.0, 20), 1, 3000, m.chain, 0, 8);
  const auto basis = RegressionBasis::polynomial(1, 1);
  const PicardResult r = picard_solve(sys.generator, sys.terminal, b, basis);
  const auto drv = frozen_component_driver(sys.generator, 0, r.components);
  const auto terminal = sample_terminal(sys.terminal, b);
  const auto direct = solve_scalar_bsde(drv, terminal[0], b, basis);
  EXPECT_EQ(direct.y, r.components[0].y);
  EXPECT_EQ(direct.z, r.components[0].z);
}

TEST(Picard, TwoRegimeDeltasDecay) {
  const MarketSpec m = testing::constant_lambda_market(testing::symmetric_two_state(), {0.2, 0.4});
  const TransformedSystem sys = build_transformed_system(m);
  const auto b = two_regime_batch(2000, 25, 12);
  const PicardResult r = picard_solve(sys.generator, sys.terminal, b, RegressionBasis::polynomial(1, 2));
  EXPECT_TRUE(r.report.converged);
  EXPECT_LE(r.report.history.back().delta_y, 1e-4);
  EXPECT_LT(r.report.fitted_ratio(3), 0.9);
  EXPECT_TRUE(r.report.within_heuristic_bound);
  for (const auto& h : r.report.history) EXPECT_GE(h.delta_y, 0.0);
}

TEST(Picard, RestartFromConvergedIterateIsStable) {
  const MarketSpec m = testing::constant_lambda_market(testing::symmetric_two_state(), {0.2, 0.4});
  const TransformedSystem sys = build_transformed_system(m);
  const auto b = two_regime_batch(1000, 20, 13);
  const auto basis = RegressionBasis::polynomial(1, 2);
  PicardOptions opts;
  const PicardResult r = picard_solve(sys.generator, sys.terminal, b, basis, opts);
  const PicardResult again = picard_solve_from(sys.generator, sys.terminal, b, basis, r.components, opts);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_LE(std::abs(again.components[l].y0() - r.components[l].y0()), opts.tolerance);
  }
}

TEST(Picard, NonConvergenceIsReported) {
  const MarketSpec m = testing::constant_lambda_market(testing::symmetric_two_state(3.0), {0.2, 0.4});
  const TransformedSystem sys = build_transformed_system(m);
  const auto b = two_regime_batch(500, 10, 2);
  PicardOptions opts;
  opts.max_iterations = 2;
  opts.tolerance = 1e-12;
  const PicardResult r = picard_solve(sys.generator, sys.terminal, b, RegressionBasis::polynomial(1, 2), opts);
  EXPECT_FALSE(r.report.converged);
  EXPECT_EQ(r.report.iterations(), 2u);
}

TEST(Picard, ComponentFailureNamesComponent) {
  std::vector<CouplingFn> coupling(2);
  std::vector<DiagonalFn> diag{
      [](const EvalContext&, double, std::span<const double>) { return 0.0; },
      [](const EvalContext&, double y, std::span<const double>) { return 1e3 * y; }};
  const GeneratorSystemSpec sys(2, 1, coupling, diag, GrowthEnvelope{});
  TerminalSpec t;
  t.dimension = 2;
  t.sampler = [](const ScenarioBatch&, std::size_t, std::span<double> out) { out[0] = out[1] = 1.0; };
  const auto b = simulate_batch(make_time_grid(1.0, 4), 1, 100, ChainGenerator::single_regime(), 0, 1);
  PicardOptions opts;
  opts.solve.mode = PositivityMode::Floor;
  try {
    picard_solve(sys, t, b, RegressionBasis::constant(), opts);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.module(), "picard-iterator");
    EXPECT_NE(std::string(e.what()).find("component 1"), std::string::npos);
  }
}

}  // namespace
}  // namespace bsde
