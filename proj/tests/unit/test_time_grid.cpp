#include <gtest/gtest.h>

#include "bsde/errors.hpp"
#include "bsde/time_grid.hpp"

namespace bsde {
namespace {

TEST(TimeGrid, SmallestGrid) {
  const TimeGrid g = make_time_grid(1.0, 1);
  ASSERT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
}

TEST(TimeGrid, UniformPartition) {
  const TimeGrid g = make_time_grid(1.0, 4);
  const double expected[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  ASSERT_EQ(g.node_count(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g[i], expected[i]);
}

TEST(TimeGrid, StepArithmetic) {
  const TimeGrid g = make_time_grid(2.0, 5);
  EXPECT_DOUBLE_EQ(g.dt(), 0.4);
  EXPECT_DOUBLE_EQ(g[3], 1.2);
}

TEST(TimeGrid, LastNodeIsExactlyHorizon) {
  for (std::size_t n : {3u, 7u, 49u, 50u, 1000u}) {
    const TimeGrid g = make_time_grid(0.3, n);
    EXPECT_EQ(g[n], 0.3);
    for (std::size_t i = 1; i < g.node_count(); ++i) EXPECT_LT(g[i - 1], g[i]);
  }
}

TEST(TimeGrid, RejectsBadParameters) {
  EXPECT_THROW(make_time_grid(0.0, 4), ConfigError);
  EXPECT_THROW(make_time_grid(-1.0, 4), ConfigError);
  EXPECT_THROW(make_time_grid(1.0, 0), ConfigError);
}

TEST(Errors, CarryContext) {
  const ConfigError c("market.gamma", "bad");
  EXPECT_EQ(c.field(), "market.gamma");
  EXPECT_NE(std::string(c.what()).find("market.gamma"), std::string::npos);
  const NumericalError n("scalar-bsde-solver", 7, "boom");
  EXPECT_EQ(n.module(), "scalar-bsde-solver");
  EXPECT_EQ(n.step(), 7);
  const DegeneracyError d("singular");
  EXPECT_EQ(d.module(), "scenario-engine");
}

}  // namespace
}  // namespace bsde
