#include "bsde/time_grid.hpp"

#include <cmath>

#include "bsde/errors.hpp"

namespace bsde {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), dt_(0.0) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ConfigError("horizon", "must be positive and finite");
  }
  if (steps < 1) throw ConfigError("steps", "must be at least 1");
  dt_ = horizon / static_cast<double>(steps);
  nodes_.resize(steps + 1);
  for (std::size_t i = 0; i < steps; ++i) nodes_[i] = static_cast<double>(i) * dt_;
  // The last node is pinned so t_N == T exactly.
  nodes_[steps] = horizon;
}

TimeGrid make_time_grid(double horizon, std::size_t steps) { return TimeGrid(horizon, steps); }

}  // namespace bsde
