#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bsde {

/// Uniform partition 0 = t_0 < ... < t_N = T.
class TimeGrid {
 public:
  /// Throws ConfigError unless horizon > 0 and steps >= 1.
  TimeGrid(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return nodes_.size() - 1; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  double dt() const noexcept { return dt_; }
  double operator[](std::size_t i) const { return nodes_[i]; }
  std::span<const double> nodes() const noexcept { return nodes_; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  double dt_;
  std::vector<double> nodes_;
};

TimeGrid make_time_grid(double horizon, std::size_t steps);

}  // namespace bsde
