#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsde/time_grid.hpp"

namespace bsde {

/// Rate matrix Q of a finite-state continuous-time Markov chain.
/// Off-diagonal rates are nonnegative and rows sum to zero.
class ChainGenerator {
 public:
  /// Throws ConfigError on a non-square matrix, negative off-diagonal rates,
  /// positive diagonal entries, or rows whose sum differs from 0 by more than 1e-12 * scale.
  explicit ChainGenerator(Eigen::MatrixXd rates);

  static ChainGenerator single_regime() { return ChainGenerator(Eigen::MatrixXd::Zero(1, 1)); }

  std::size_t states() const noexcept { return static_cast<std::size_t>(rates_.rows()); }
  const Eigen::MatrixXd& rates() const noexcept { return rates_; }
  double rate(std::size_t from, std::size_t to) const { return rates_(from, to); }
  /// -q^{ll}, the total jump intensity out of state l.
  double exit_rate(std::size_t l) const { return -rates_(l, l); }

 private:
  Eigen::MatrixXd rates_;
};

struct ScenarioSeeds {
  std::uint64_t brownian = 0;
  std::uint64_t chain = 0;

  friend bool operator==(const ScenarioSeeds&, const ScenarioSeeds&) = default;
};

/// M simulated paths of d-dimensional Brownian increments and of the regime chain,
/// stored node-major so a backward sweep touches contiguous memory.
class ScenarioBatch {
 public:
  ScenarioBatch(TimeGrid grid, std::size_t paths, std::size_t brownian_dim, std::size_t regimes,
                ScenarioSeeds seeds, std::vector<double> increments,
                std::vector<std::uint32_t> states);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t paths() const noexcept { return paths_; }
  std::size_t brownian_dim() const noexcept { return dim_; }
  std::size_t regime_count() const noexcept { return regimes_; }
  const ScenarioSeeds& seeds() const noexcept { return seeds_; }

  /// Delta W over [t_step, t_step+1] for one path (length d).
  std::span<const double> increment(std::size_t step, std::size_t path) const {
    return {increments_.data() + (step * paths_ + path) * dim_, dim_};
  }
  /// W_{t_node} for one path (length d).
  std::span<const double> brownian(std::size_t node, std::size_t path) const {
    return {positions_.data() + (node * paths_ + path) * dim_, dim_};
  }
  std::size_t regime(std::size_t node, std::size_t path) const {
    return states_[node * paths_ + path];
  }

  std::span<const double> raw_increments() const noexcept { return increments_; }
  std::span<const std::uint32_t> raw_states() const noexcept { return states_; }

  friend bool operator==(const ScenarioBatch& a, const ScenarioBatch& b) {
    return a.grid_ == b.grid_ && a.paths_ == b.paths_ && a.dim_ == b.dim_ &&
           a.regimes_ == b.regimes_ && a.seeds_ == b.seeds_ && a.increments_ == b.increments_ &&
           a.states_ == b.states_;
  }

 private:
  TimeGrid grid_;
  std::size_t paths_;
  std::size_t dim_;
  std::size_t regimes_;
  ScenarioSeeds seeds_;
  std::vector<double> increments_;     // steps x paths x d
  std::vector<std::uint32_t> states_;  // nodes x paths
  std::vector<double> positions_;      // nodes x paths x d, cumulative sums of increments
};

/// Independent N(0, dt) increments, layout steps x paths x d. Deterministic in the seed
/// and independent of `threads`.
std::vector<double> simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                                      std::uint64_t seed, unsigned threads = 1);

/// Jump-chain simulation (exponential holding times, jump law q^{lj} / -q^{ll}) recorded at
/// grid nodes; layout nodes x paths. Every path starts in `initial`.
std::vector<std::uint32_t> simulate_chain(const ChainGenerator& generator, std::size_t initial,
                                          const TimeGrid& grid, std::size_t paths,
                                          std::uint64_t seed, unsigned threads = 1);

/// Both streams, seeded from `master` via labelled hashing ("brownian", "chain").
ScenarioBatch simulate_batch(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                             const ChainGenerator& generator, std::size_t initial,
                             std::uint64_t master, unsigned threads = 1);

/// Row `initial` of exp(tQ). Uses uniformization of a scaled step followed by repeated squaring,
/// so every intermediate matrix is entrywise nonnegative.
Eigen::VectorXd chain_marginal(const ChainGenerator& generator, double t, std::size_t initial);

/// Binary persistence; reload is bit-exact.
void save_batch(const ScenarioBatch& batch, const std::filesystem::path& file);
ScenarioBatch load_batch(const std::filesystem::path& file);

}  // namespace bsde
