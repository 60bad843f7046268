#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "bsde/coefficients.hpp"
#include "bsde/errors.hpp"
#include "bsde/rng.hpp"
#include "bsde/scenario.hpp"
#include "bsde/stats.hpp"
#include "test_support.hpp"

namespace bsde {
namespace {

TEST(Rng, StreamsDependOnLabel) {
  EXPECT_NE(derive_stream_seed(1, "brownian"), derive_stream_seed(1, "chain"));
  EXPECT_EQ(derive_stream_seed(1, "brownian"), derive_stream_seed(1, "brownian"));
  EXPECT_NE(derive_block_seed(5, 0), derive_block_seed(5, 1));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
}

TEST(Brownian, TerminalVarianceAcrossSeeds) {
  const TimeGrid grid = make_time_grid(1.0, 1);
  std::vector<double> wt;
  wt.reserve(100000);
  for (std::uint64_t seed = 0; seed < 100000; ++seed) wt.push_back(simulate_brownian(grid, 1, 1, seed)[0]);
  double mean = 0.0;
  for (double w : wt) mean += w;
  mean /= static_cast<double>(wt.size());
  double var = 0.0;
  for (double w : wt) var += (w - mean) * (w - mean);
  var /= static_cast<double>(wt.size() - 1);
  // sd of the sample variance of N(0,1) is sqrt(2/n).
  EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / 1e5));
}

TEST(Brownian, CoordinateMeansWithinClt) {
  const TimeGrid grid = make_time_grid(1.0, 4);
  const std::size_t m = 100000, d = 2;
  const auto inc = simulate_brownian(grid, d, m, 42);
  const double bound = 4.0 * std::sqrt(grid.dt() / static_cast<double>(m));
  for (std::size_t step = 0; step < 4; ++step) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < m; ++p) s += inc[(step * m + p) * d + j];
      EXPECT_LT(std::abs(s / static_cast<double>(m)), bound);
    }
  }
}

TEST(Brownian, DeterministicAndThreadIndependent) {
  const TimeGrid grid = make_time_grid(1.0, 10);
  const auto a = simulate_brownian(grid, 2, 1000, 99, 1);
  const auto b = simulate_brownian(grid, 2, 1000, 99, 1);
  const auto c = simulate_brownian(grid, 2, 1000, 99, 4);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, simulate_brownian(grid, 2, 1000, 100, 1));
}

TEST(Chain, SingleRegimeStaysPut) {
  const auto s = simulate_chain(ChainGenerator::single_regime(), 0, make_time_grid(1.0, 10), 50, 1);
  for (auto v : s) EXPECT_EQ(v, 0u);
}

TEST(Chain, RejectsInvalidRates) {
  Eigen::MatrixXd q(2, 2);
  q << 0.5, -0.5, 1.0, -1.0;
  EXPECT_THROW(ChainGenerator{q}, ConfigError);
  q << -1.0, 0.9, 1.0, -1.0;
  EXPECT_THROW(ChainGenerator{q}, ConfigError);
  EXPECT_THROW(ChainGenerator(Eigen::MatrixXd::Zero(2, 3)), ConfigError);
  q << -1.0, 1.0, 1.0, -1.0;
  EXPECT_THROW(simulate_chain(ChainGenerator(q), 2, make_time_grid(1.0, 2), 4, 1), ConfigError);
}

TEST(Chain, SymmetricMarginalAtHalf) {
  const ChainGenerator gen(testing::symmetric_two_state());
  const TimeGrid grid = make_time_grid(0.5, 5);
  const std::size_t m = 100000;
  const auto s = simulate_chain(gen, 0, grid, m, 77);
  std::vector<double> ind(m);
  for (std::size_t p = 0; p < m; ++p) ind[p] = s[5 * m + p] == 0 ? 1.0 : 0.0;
  const MeanEstimate est = mean_estimate(ind);
  const double exact = (1.0 + std::exp(-1.0)) / 2.0;
  EXPECT_NEAR(exact, 0.68394, 1e-5);
  EXPECT_NEAR(est.mean, exact, 3.0 * est.stderr_value);
}

TEST(Chain, OccupancyMatchesMarginalAtEveryNode) {
  Eigen::MatrixXd q(3, 3);
  q << -2.0, 1.5, 0.5, 0.3, -0.3, 0.0, 1.0, 1.0, -2.0;
  const ChainGenerator gen(q);
  const TimeGrid grid = make_time_grid(1.0, 10);
  const std::size_t m = 100000;
  const auto s = simulate_chain(gen, 2, grid, m, 5, 2);
  for (std::size_t node = 0; node <= 10; ++node) {
    const Eigen::VectorXd p = chain_marginal(gen, grid[node], 2);
    for (std::size_t l = 0; l < 3; ++l) {
      std::size_t count = 0;
      for (std::size_t path = 0; path < m; ++path) count += s[node * m + path] == l;
      const double freq = static_cast<double>(count) / static_cast<double>(m);
      const double pl = p[static_cast<Eigen::Index>(l)];
      const double se = std::sqrt(std::max(pl * (1.0 - pl), 1e-12) / static_cast<double>(m));
      EXPECT_NEAR(freq, pl, 4.0 * se + 1e-12) << "node " << node << " state " << l;
    }
  }
}

TEST(Chain, AbsorbingStateIsKept) {
  Eigen::MatrixXd q(2, 2);
  q << -5.0, 5.0, 0.0, 0.0;
  const TimeGrid grid = make_time_grid(2.0, 20);
  const std::size_t m = 500;
  const auto s = simulate_chain(ChainGenerator(q), 0, grid, m, 8);
  for (std::size_t p = 0; p < m; ++p) {
    bool absorbed = false;
    for (std::size_t node = 0; node <= 20; ++node) {
      if (absorbed) EXPECT_EQ(s[node * m + p], 1u);
      absorbed = absorbed || s[node * m + p] == 1u;
    }
  }
}

TEST(ChainMarginal, Examples) {
  const ChainGenerator gen(testing::symmetric_two_state());
  const Eigen::VectorXd p0 = chain_marginal(gen, 0.0, 1);
  EXPECT_EQ(p0[0], 0.0);
  EXPECT_EQ(p0[1], 1.0);
  const Eigen::VectorXd ph = chain_marginal(gen, 0.5, 0);
  EXPECT_NEAR(ph[0], 0.68394, 5e-6);
  EXPECT_NEAR(ph[1], 0.31606, 5e-6);
  EXPECT_NEAR(ph.sum(), 1.0, 1e-12);
  const Eigen::VectorXd pinf = chain_marginal(gen, 50.0, 0);
  EXPECT_NEAR(pinf[0], 0.5, 1e-12);
  EXPECT_NEAR(pinf[1], 0.5, 1e-12);
}

TEST(ChainMarginal, StationaryOfAsymmetricChain) {
  Eigen::MatrixXd q(2, 2);
  q << -0.5, 0.5, 2.0, -2.0;
  const Eigen::VectorXd p = chain_marginal(ChainGenerator(q), 40.0, 0);
  EXPECT_NEAR(p[0], 0.8, 1e-12);
  EXPECT_NEAR(p[1], 0.2, 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Independence, IncrementsUncorrelatedWithRegimes) {
  const std::size_t m = 100000;
  const auto batch = simulate_batch(make_time_grid(1.0, 4), 1, m, ChainGenerator(testing::symmetric_two_state()), 0, 321);
  for (std::size_t step = 0; step < 4; ++step) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t p = 0; p < m; ++p) {
      const double x = batch.increment(step, p)[0];
      const double y = batch.regime(step + 1, p) == 1 ? 1.0 : 0.0;
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
    }
    const double n = static_cast<double>(m);
    const double cov = sxy / n - sx / n * sy / n;
    const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
    EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(n));
  }
}

TEST(Batch, PositionsAreCumulativeIncrements) {
  const auto b = simulate_batch(make_time_grid(1.0, 5), 2, 10, ChainGenerator::single_regime(), 0, 1);
  for (std::size_t p = 0; p < 10; ++p) {
    for (std::size_t j = 0; j < 2; ++j) {
      double w = 0.0;
      EXPECT_EQ(b.brownian(0, p)[j], 0.0);
      for (std::size_t s = 0; s < 5; ++s) {
        w += b.increment(s, p)[j];
        EXPECT_NEAR(b.brownian(s + 1, p)[j], w, 1e-15);
      }
    }
  }
}

TEST(Batch, SaveLoadIsBitExact) {
  const auto b = simulate_batch(make_time_grid(0.7, 6), 2, 300, ChainGenerator(testing::symmetric_two_state(0.4)), 1, 12);
  const auto file = std::filesystem::temp_directory_path() / "bsde_batch_roundtrip.bin";
  save_batch(b, file);
  const auto c = load_batch(file);
  EXPECT_TRUE(b == c);
  EXPECT_EQ(c.seeds().brownian, derive_stream_seed(12, "brownian"));
  std::filesystem::remove(file);
}

TEST(MarketPriceOfRisk, Examples) {
  EXPECT_EQ(market_price_of_risk(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.2))[0], 0.0);
  EXPECT_NEAR(market_price_of_risk(Eigen::VectorXd::Constant(1, 0.1), Eigen::MatrixXd::Constant(1, 1, 0.2))[0], 0.5,
              1e-14);
  Eigen::VectorXd b(2);
  b << 0.1, 0.3;
  const Eigen::VectorXd l = market_price_of_risk(b, Eigen::MatrixXd::Identity(2, 2));
  EXPECT_NEAR(l[0], 0.1, 1e-15);
  EXPECT_NEAR(l[1], 0.3, 1e-15);
}

TEST(MarketPriceOfRisk, ReproducesDriftForRectangularVol) {
  Eigen::MatrixXd s(2, 3);
  s << 0.3, 0.1, -0.2, 0.05, 0.4, 0.1;
  Eigen::VectorXd b(2);
  b << 0.07, -0.02;
  const Eigen::VectorXd l = market_price_of_risk(b, s);
  EXPECT_LT((s * l - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MarketPriceOfRisk, SingularVolatility) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, 2.0, 2.0, 4.0;
  EXPECT_THROW(market_price_of_risk(Eigen::VectorXd::Ones(2), s), DegeneracyError);
}

TEST(Nondegeneracy, Examples) {
  const double times[] = {0.0, 0.5, 1.0};
  const auto id = check_nondegeneracy([](double, std::size_t) { return Eigen::MatrixXd::Identity(2, 2); }, times, 1, 0.5);
  EXPECT_TRUE(id.pass);
  EXPECT_NEAR(id.worst_margin, 0.5, 1e-14);
  const auto diag = check_nondegeneracy(
      [](double, std::size_t) { return Eigen::Vector2d(0.2, 0.1).asDiagonal().toDenseMatrix(); }, times, 1, 0.05);
  EXPECT_FALSE(diag.pass);
  EXPECT_NEAR(diag.worst_margin, 0.01 - 0.05, 1e-14);
  const auto rank = check_nondegeneracy(
      [](double, std::size_t) {
        Eigen::MatrixXd s(2, 2);
        s << 1.0, 1.0, 1.0, 1.0;
        return s;
      },
      times, 2, 1e-9);
  EXPECT_FALSE(rank.pass);
}

}  // namespace
}  // namespace bsde
