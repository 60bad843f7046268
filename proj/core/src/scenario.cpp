#include "bsde/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "bsde/errors.hpp"
#include "bsde/rng.hpp"

namespace bsde {

ChainGenerator::ChainGenerator(Eigen::MatrixXd rates) : rates_(std::move(rates)) {
  if (rates_.rows() == 0 || rates_.rows() != rates_.cols()) {
    throw ConfigError("rates", "rate matrix must be square and nonempty");
  }
  if (!rates_.allFinite()) throw ConfigError("rates", "rate matrix has non-finite entries");
  for (Eigen::Index l = 0; l < rates_.rows(); ++l) {
    double scale = 0.0;
    for (Eigen::Index j = 0; j < rates_.cols(); ++j) {
      scale = std::max(scale, std::abs(rates_(l, j)));
      if (j != l && rates_(l, j) < 0.0) {
        throw ConfigError("rates", "off-diagonal rate q[" + std::to_string(l) + "][" +
                                       std::to_string(j) + "] is negative");
      }
    }
    if (rates_(l, l) > 0.0) {
      throw ConfigError("rates", "diagonal rate q[" + std::to_string(l) + "][" +
                                     std::to_string(l) + "] is positive");
    }
    if (std::abs(rates_.row(l).sum()) > 1e-12 * std::max(1.0, scale)) {
      throw ConfigError("rates", "row " + std::to_string(l) + " does not sum to zero");
    }
  }
}

ScenarioBatch::ScenarioBatch(TimeGrid grid, std::size_t paths, std::size_t brownian_dim,
                             std::size_t regimes, ScenarioSeeds seeds,
                             std::vector<double> increments, std::vector<std::uint32_t> states)
    : grid_(std::move(grid)),
      paths_(paths),
      dim_(brownian_dim),
      regimes_(regimes),
      seeds_(seeds),
      increments_(std::move(increments)),
      states_(std::move(states)) {
  const std::size_t steps = grid_.steps();
  if (paths_ == 0) throw ConfigError("paths", "must be at least 1");
  if (dim_ == 0) throw ConfigError("brownian_dim", "must be at least 1");
  if (regimes_ == 0) throw ConfigError("regimes", "must be at least 1");
  if (increments_.size() != steps * paths_ * dim_) {
    throw InternalError("ScenarioBatch: increment array has wrong size");
  }
  if (states_.size() != (steps + 1) * paths_) {
    throw InternalError("ScenarioBatch: regime array has wrong size");
  }
  for (auto s : states_) {
    if (s >= regimes_) throw InternalError("ScenarioBatch: regime state out of range");
  }
  positions_.assign((steps + 1) * paths_ * dim_, 0.0);
  const std::size_t stride = paths_ * dim_;
  for (std::size_t i = 0; i < steps; ++i) {
    const double* w = positions_.data() + i * stride;
    const double* dw = increments_.data() + i * stride;
    double* next = positions_.data() + (i + 1) * stride;
    for (std::size_t k = 0; k < stride; ++k) next[k] = w[k] + dw[k];
  }
}

std::vector<double> simulate_brownian(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                                      std::uint64_t seed, unsigned threads) {
  if (dim < 1) throw ConfigError("brownian_dim", "must be at least 1");
  if (paths < 1) throw ConfigError("paths", "must be at least 1");
  const std::size_t steps = grid.steps();
  const double sd = std::sqrt(grid.dt());
  std::vector<double> out(steps * paths * dim);
  const std::size_t blocks = (paths + kPathBlockSize - 1) / kPathBlockSize;
  parallel_for_blocks(blocks, threads, [&](std::size_t block) {
    std::mt19937_64 engine(derive_block_seed(seed, block));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t first = block * kPathBlockSize;
    const std::size_t last = std::min(paths, first + kPathBlockSize);
    for (std::size_t path = first; path < last; ++path) {
      for (std::size_t i = 0; i < steps; ++i) {
        double* dw = out.data() + (i * paths + path) * dim;
        for (std::size_t j = 0; j < dim; ++j) dw[j] = sd * normal(engine);
      }
    }
  });
  return out;
}

std::vector<std::uint32_t> simulate_chain(const ChainGenerator& generator, std::size_t initial,
                                          const TimeGrid& grid, std::size_t paths,
                                          std::uint64_t seed, unsigned threads) {
  const std::size_t k = generator.states();
  if (initial >= k) throw ConfigError("initial_regime", "outside the chain's state space");
  if (paths < 1) throw ConfigError("paths", "must be at least 1");
  const std::size_t nodes = grid.node_count();
  std::vector<std::uint32_t> out(nodes * paths);
  const std::size_t blocks = (paths + kPathBlockSize - 1) / kPathBlockSize;
  parallel_for_blocks(blocks, threads, [&](std::size_t block) {
    std::mt19937_64 engine(derive_block_seed(seed, block));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const auto holding = [&](std::size_t state) {
      const double rate = generator.exit_rate(state);
      if (rate <= 0.0) return std::numeric_limits<double>::infinity();
      return std::exponential_distribution<double>(rate)(engine);
    };
    const auto jump = [&](std::size_t state) {
      const double rate = generator.exit_rate(state);
      const double u = uniform(engine) * rate;
      double acc = 0.0;
      std::size_t target = state;
      for (std::size_t j = 0; j < k; ++j) {
        if (j == state) continue;
        const double q = generator.rate(state, j);
        if (q <= 0.0) continue;
        target = j;  // last admissible state absorbs rounding at the top of the range
        acc += q;
        if (u < acc) break;
      }
      return target;
    };
    const std::size_t first = block * kPathBlockSize;
    const std::size_t last = std::min(paths, first + kPathBlockSize);
    for (std::size_t path = first; path < last; ++path) {
      std::size_t state = initial;
      double next_jump = holding(state);
      for (std::size_t i = 0; i < nodes; ++i) {
        const double t = grid[i];
        while (next_jump <= t) {
          state = jump(state);
          next_jump += holding(state);
        }
        out[i * paths + path] = static_cast<std::uint32_t>(state);
      }
    }
  });
  return out;
}

ScenarioBatch simulate_batch(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                             const ChainGenerator& generator, std::size_t initial,
                             std::uint64_t master, unsigned threads) {
  const ScenarioSeeds seeds{derive_stream_seed(master, "brownian"),
                            derive_stream_seed(master, "chain")};
  auto increments = simulate_brownian(grid, dim, paths, seeds.brownian, threads);
  auto states = simulate_chain(generator, initial, grid, paths, seeds.chain, threads);
  return ScenarioBatch(grid, paths, dim, generator.states(), seeds, std::move(increments),
                       std::move(states));
}

Eigen::VectorXd chain_marginal(const ChainGenerator& generator, double t, std::size_t initial) {
  const auto k = static_cast<Eigen::Index>(generator.states());
  if (initial >= generator.states()) {
    throw ConfigError("initial_regime", "outside the chain's state space");
  }
  if (!(t >= 0.0)) throw ConfigError("t", "must be nonnegative");
  const Eigen::MatrixXd& q = generator.rates();
  double nu = 0.0;
  for (Eigen::Index l = 0; l < k; ++l) nu = std::max(nu, -q(l, l));
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(k);
  unit(static_cast<Eigen::Index>(initial)) = 1.0;
  if (nu == 0.0 || t == 0.0) return unit;

  // exp(hQ) = e^{-nu h} sum_n (nu h)^n / n! P^n with P = I + Q/nu >= 0, for h = t / 2^s.
  int squarings = 0;
  double h = t;
  while (nu * h > 0.5) {
    h *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(k, k) + q / nu;
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd sum = term;
  const double x = nu * h;
  for (int n = 1; n <= 30; ++n) {
    term = (term * p) * (x / n);
    sum += term;
    if (term.maxCoeff() < 1e-18) break;
  }
  Eigen::MatrixXd e = std::exp(-x) * sum;
  for (int s = 0; s < squarings; ++s) e = (e * e).eval();
  Eigen::VectorXd row = e.row(static_cast<Eigen::Index>(initial)).transpose();
  row /= row.sum();
  return row;
}

namespace {

constexpr std::array<char, 8> kBatchMagic{'B', 'S', 'D', 'E', 'B', 'T', 'C', '1'};

template <class T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("batch", "truncated batch file");
  return value;
}

}  // namespace

void save_batch(const ScenarioBatch& batch, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  out.write(kBatchMagic.data(), kBatchMagic.size());
  write_pod(out, batch.seeds().brownian);
  write_pod(out, batch.seeds().chain);
  write_pod(out, batch.grid().horizon());
  write_pod(out, static_cast<std::uint64_t>(batch.grid().steps()));
  write_pod(out, static_cast<std::uint64_t>(batch.paths()));
  write_pod(out, static_cast<std::uint64_t>(batch.regime_count()));
  write_pod(out, static_cast<std::uint64_t>(batch.brownian_dim()));
  const auto inc = batch.raw_increments();
  const auto st = batch.raw_states();
  out.write(reinterpret_cast<const char*>(inc.data()),
            static_cast<std::streamsize>(inc.size_bytes()));
  out.write(reinterpret_cast<const char*>(st.data()),
            static_cast<std::streamsize>(st.size_bytes()));
  if (!out) throw Error("failed writing " + file.string());
}

ScenarioBatch load_batch(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("batch", "cannot open " + file.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kBatchMagic) throw ConfigError("batch", "not a scenario batch file");
  ScenarioSeeds seeds;
  seeds.brownian = read_pod<std::uint64_t>(in);
  seeds.chain = read_pod<std::uint64_t>(in);
  const auto horizon = read_pod<double>(in);
  const auto steps = read_pod<std::uint64_t>(in);
  const auto paths = read_pod<std::uint64_t>(in);
  const auto regimes = read_pod<std::uint64_t>(in);
  const auto dim = read_pod<std::uint64_t>(in);
  TimeGrid grid(horizon, steps);
  std::vector<double> inc(steps * paths * dim);
  std::vector<std::uint32_t> st((steps + 1) * paths);
  in.read(reinterpret_cast<char*>(inc.data()), static_cast<std::streamsize>(inc.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(st.data()),
          static_cast<std::streamsize>(st.size() * sizeof(std::uint32_t)));
  if (!in) throw ConfigError("batch", "truncated batch file");
  return ScenarioBatch(std::move(grid), paths, dim, regimes, seeds, std::move(inc), std::move(st));
}

}  // namespace bsde
