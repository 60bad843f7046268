#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace bsde {

struct MeanEstimate {
  double mean = 0.0;
  double stderr_value = 0.0;
};

/// Sample mean and standard error, summed in index order.
inline MeanEstimate mean_estimate(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return {};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace bsde
