#include "bsde/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "bsde/errors.hpp"
#include "bsde/estimates.hpp"
#include "bsde/oracles.hpp"
#include "bsde/report_io.hpp"
#include "bsde/rng.hpp"

#ifndef BSDE_VERSION_STRING
#define BSDE_VERSION_STRING "unknown"
#endif

namespace bsde {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentManifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void ExperimentManifest::set(const std::string& key, double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, value);
  set(key, std::string(buf));
}

std::string ExperimentManifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return {};
}

bool ExperimentManifest::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

void ExperimentManifest::add_output(const std::string& file) {
  outputs_.push_back(file);
  std::string joined;
  for (std::size_t i = 0; i < outputs_.size(); ++i) joined += (i ? "," : "") + outputs_[i];
  set("outputs", joined);
}

void ExperimentManifest::write(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
}

ExperimentManifest ExperimentManifest::read(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MissingOutputError("missing manifest " + file.string());
  ExperimentManifest m;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || eq == std::string::npos) continue;
    m.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const std::string outs = m.get("outputs");
  std::stringstream ss(outs);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) m.outputs_.push_back(item);
  }
  return m;
}

std::string format_y0(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", value);
  return buf;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

PicardOptions picard_options(const ExperimentConfig& c) {
  PicardOptions o;
  o.tolerance = c.solver.tolerance;
  o.max_iterations = c.solver.max_iterations;
  o.solve = c.solver.solve_options();
  o.integrability_p = c.integrability_p;
  return o;
}

std::vector<std::vector<double>> component_samples(const TerminalSpec& spec, const ScenarioBatch& batch) {
  return sample_terminal(spec, batch);
}

void write_solution_outputs(const SolvedMarket& s, const fs::path& dir, ExperimentManifest& manifest) {
  const std::size_t k = s.solution.size();
  CsvTable y0({"component", "y0", "stderr", "y0_transformed"});
  for (std::size_t l = 0; l < k; ++l) {
    y0.row({std::to_string(l), CsvTable::num(s.solution[l].y0()), CsvTable::num(s.solution[l].y0_stderr),
            CsvTable::num(s.transformed.components[l].y0())});
    manifest.set("y0." + std::to_string(l), format_y0(s.solution[l].y0()));
  }
  y0.write(dir / "y0.csv");
  manifest.add_output("y0.csv");

  CsvTable picard({"iteration", "delta_y", "delta_z", "wall_time_ms"});
  for (const auto& h : s.transformed.report.history) {
    picard.row({std::to_string(h.iteration), CsvTable::num(h.delta_y), CsvTable::num(h.delta_z),
                CsvTable::num(h.wall_time_ms)});
  }
  picard.write(dir / "picard.csv");
  manifest.add_output("picard.csv");

  std::vector<std::string> cols{"node", "t"};
  for (std::size_t l = 0; l < k; ++l) {
    cols.push_back("mean_y" + std::to_string(l));
    cols.push_back("min_y" + std::to_string(l));
  }
  CsvTable nodes(cols);
  const TimeGrid& grid = s.batch.grid();
  const std::size_t m = s.batch.paths();
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    std::vector<std::string> row{std::to_string(node), CsvTable::num(grid[node])};
    for (std::size_t l = 0; l < k; ++l) {
      double sum = 0.0, lo = s.solution[l].y_at(node, 0);
      for (std::size_t p = 0; p < m; ++p) {
        sum += s.solution[l].y_at(node, p);
        lo = std::min(lo, s.solution[l].y_at(node, p));
      }
      row.push_back(CsvTable::num(sum / static_cast<double>(m)));
      row.push_back(CsvTable::num(lo));
    }
    nodes.row(row);
  }
  nodes.write(dir / "solution_nodes.csv");
  manifest.add_output("solution_nodes.csv");

  json doc;
  doc["picard"] = to_json(s.transformed.report);
  json comps = json::array();
  for (std::size_t l = 0; l < k; ++l) {
    comps.push_back({{"component", l},
                     {"y0", s.solution[l].y0()},
                     {"y0_stderr", s.solution[l].y0_stderr},
                     {"clamp_events", s.transformed.components[l].clamp_events},
                     {"max_inner_iterations", s.transformed.components[l].max_inner_iterations}});
  }
  doc["components"] = comps;
  doc["positivity_mode"] = to_string(s.transformed.components.front().options.mode);
  write_json(doc, dir / "solve.json");
  manifest.add_output("solve.json");
  manifest.set("picard.iterations", std::to_string(s.transformed.report.iterations()));
  manifest.set("picard.converged", s.transformed.report.converged ? "true" : "false");
  manifest.set("wall_time_ms.solve", s.wall_time_ms, 6);
}

void run_validate(const ExperimentConfig& c, const fs::path& dir, ExperimentManifest& manifest) {
  const MarketSpec& market = c.market;
  const TransformedSystem sys = build_transformed_system(market);
  const std::size_t k = market.regime_count();
  ProbeGridOptions popts;
  popts.regimes = k;
  const std::vector<Probe> probes = default_probe_grid(k, market.brownian_dim(), market.horizon, popts);
  const ValidationReport h1 = validate_h1(sys.generator, probes);

  // The untransformed coupling sum_j q^{lj} y^j is reported for reference: it is negative
  // whenever regimes switch, which is why the solver uses the transformed system.
  const GeneratorSystemSpec raw = build_generator_system(market);
  const ValidationReport raw_coupling = validate_coupling(raw, probes);

  const ScenarioBatch batch = simulate_market_batch(c, c.paths);
  TerminalSpec terminal = sys.terminal;
  terminal.p = c.integrability_p;
  terminal.q = c.integrability_q;
  terminal.validate_exponents();
  const ValidationReport term = validate_terminal(terminal, batch, sys.generator.envelope());

  std::vector<double> times(5);
  for (std::size_t i = 0; i < times.size(); ++i) times[i] = market.horizon * static_cast<double>(i) / 4.0;
  const NondegeneracyReport nd = check_nondegeneracy(
      [&market](double t, std::size_t l) { return market.regimes[l].volatility_at(t); }, times, k, market.mu);
  const ContractionHorizon horizon =
      contraction_horizon(sys.generator.envelope().lipschitz, c.integrability_p, market.delta(), k, market.horizon);

  json doc;
  doc["h1_transformed"] = to_json(h1);
  doc["coupling_untransformed"] = to_json(raw_coupling);
  doc["terminal"] = to_json(term);
  doc["nondegeneracy"] = to_json(nd);
  doc["contraction_horizon"] = to_json(horizon);
  doc["lipschitz"] = sys.generator.envelope().lipschitz;
  doc["delta"] = market.delta();
  doc["ok"] = h1.ok() && term.ok() && nd.pass;
  write_json(doc, dir / "validation.json");
  manifest.add_output("validation.json");
  manifest.set("validation.ok", doc["ok"].get<bool>() ? "true" : "false");
  manifest.set("validation.violations", std::to_string(h1.violation_count() + term.violation_count()));
  manifest.set("contraction.m0", std::to_string(horizon.m0));
}

void run_simulate(const ExperimentConfig& c, const fs::path& dir, ExperimentManifest& manifest) {
  const auto start = Clock::now();
  const ScenarioBatch batch = simulate_market_batch(c, c.paths);
  manifest.set("wall_time_ms.simulate", ms_since(start), 6);
  save_batch(batch, dir / "batch.bin");
  manifest.add_output("batch.bin");
  const std::size_t k = batch.regime_count();
  std::vector<std::string> cols{"node", "t"};
  for (std::size_t l = 0; l < k; ++l) {
    cols.push_back("occupancy" + std::to_string(l));
    cols.push_back("marginal" + std::to_string(l));
  }
  cols.push_back("w_mean");
  cols.push_back("w_var");
  CsvTable table(cols);
  const TimeGrid& grid = batch.grid();
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    std::vector<std::size_t> counts(k, 0);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < batch.paths(); ++p) {
      ++counts[batch.regime(node, p)];
      const double w = batch.brownian(node, p)[0];
      s1 += w;
      s2 += w * w;
    }
    const Eigen::VectorXd marginal = chain_marginal(c.market.chain, grid[node], c.market.initial_regime);
    std::vector<std::string> row{std::to_string(node), CsvTable::num(grid[node])};
    const double mcount = static_cast<double>(batch.paths());
    for (std::size_t l = 0; l < k; ++l) {
      row.push_back(CsvTable::num(static_cast<double>(counts[l]) / mcount));
      row.push_back(CsvTable::num(marginal[static_cast<Eigen::Index>(l)]));
    }
    row.push_back(CsvTable::num(s1 / mcount));
    row.push_back(CsvTable::num(s2 / mcount - (s1 / mcount) * (s1 / mcount)));
    table.row(row);
  }
  table.write(dir / "scenario_summary.csv");
  manifest.add_output("scenario_summary.csv");
}

void run_verify_bounds(const ExperimentConfig& c, const fs::path& dir, ExperimentManifest& manifest) {
  const SolvedMarket s = solve_market(c, c.paths);
  write_solution_outputs(s, dir, manifest);
  const std::size_t k = s.solution.size();
  const auto terminal = component_samples(s.system.terminal, s.batch);
  std::vector<EstimateReport> reports;
  reports.push_back(check_positivity(s.solution));
  reports.back().check = "positivity";
  reports.push_back(check_positivity(s.transformed.components));
  reports.back().check = "positivity_transformed";
  for (std::size_t l = 0; l < k; ++l) {
    const std::string tag = "[" + std::to_string(l) + "]";
    const ScalarDriver env = frozen_component_driver(s.system.generator, l, s.transformed.components);
    reports.push_back(check_moment_bound(s.transformed.components[l], env, s.batch, terminal[l], &s.basis));
    reports.back().check += tag;
    reports.push_back(check_terminal_lower_bound(s.transformed.components[l], terminal[l]));
    reports.back().check += tag;
    reports.push_back(check_z_moment_ratio(s.transformed.components[l], env, s.batch, c.integrability_p));
    reports.back().check += tag;
    if (c.market.bound_d > 0.0) {
      reports.push_back(check_value_floor("value_floor" + tag, s.solution[l].y0(), s.solution[l].y0_stderr,
                                          std::pow(c.market.bound_d, -c.market.gamma)));
    }
  }
  reports.push_back(y_sup_norm(s.solution));

  // Z-moment ratio across the refinement N/2, N, 2N (same seed).
  std::vector<std::vector<double>> ratios(k);
  for (std::size_t steps : {std::max<std::size_t>(1, c.steps / 2), c.steps, 2 * c.steps}) {
    ExperimentConfig rc = c;
    rc.steps = steps;
    std::optional<SolvedMarket> r;
    if (steps != c.steps) r.emplace(solve_market(rc, c.paths));
    const SolvedMarket& use = r ? *r : s;
    for (std::size_t l = 0; l < k; ++l) {
      const ScalarDriver env = frozen_component_driver(use.system.generator, l, use.transformed.components);
      ratios[l].push_back(check_z_moment_ratio(use.transformed.components[l], env, use.batch, c.integrability_p).lhs);
    }
  }
  for (std::size_t l = 0; l < k; ++l) {
    reports.push_back(check_ratio_refinement(ratios[l]));
    reports.back().check += "[" + std::to_string(l) + "]";
  }

  json doc = json::array();
  CsvTable table({"check", "lhs", "rhs", "slack", "lhs_stderr", "rhs_stderr", "pass", "informational"});
  bool all = true;
  for (const auto& r : reports) {
    doc.push_back(to_json(r));
    table.row({r.check, CsvTable::num(r.lhs), CsvTable::num(r.rhs), CsvTable::num(r.slack),
               CsvTable::num(r.lhs_stderr), CsvTable::num(r.rhs_stderr), r.pass ? "1" : "0",
               r.informational ? "1" : "0"});
    if (!r.informational) all = all && r.pass;
  }
  write_json(doc, dir / "estimates.json");
  table.write(dir / "estimates.csv");
  manifest.add_output("estimates.json");
  manifest.add_output("estimates.csv");
  manifest.set("estimates.pass", all ? "true" : "false");
}

void run_portfolio(const ExperimentConfig& c, const fs::path& dir, ExperimentManifest& manifest) {
  const SolvedMarket s = solve_market(c, c.verification.paths);
  write_solution_outputs(s, dir, manifest);
  std::vector<StrategyPerturbation> perts;
  for (double scale : c.verification.scales) {
    std::ostringstream label;
    label << "scaled_" << scale;
    perts.push_back({label.str(), [scale](const StrategyGrid& opt) { return opt.scaled(scale); }});
  }
  if (c.verification.constant_strategy) {
    const Eigen::VectorXd w = c.market.lambda(0.0, c.market.initial_regime) / (1.0 - c.market.gamma);
    const ScenarioBatch* b = &s.batch;
    perts.push_back({"constant_initial_merton", [w, b](const StrategyGrid&) { return constant_strategy(w, *b); }});
  }
  if (!c.verification.strategy_file.empty()) {
    fs::path file = c.verification.strategy_file;
    if (file.is_relative()) file = c.base_dir / file;
    for (auto& p : load_strategy_file(file, c.market, s.batch)) perts.push_back(std::move(p));
  }
  const auto start = Clock::now();
  const VerificationReport rep =
      verify_optimality(c.market, s.solution, perts, s.batch, c.verification.sigmas, c.threads);
  manifest.set("wall_time_ms.verify", ms_since(start), 6);
  write_json(to_json(rep), dir / "verification.json");
  manifest.add_output("verification.json");
  CsvTable table({"label", "utility", "stderr", "value_bsde", "gap_sigmas", "dominated"});
  auto add = [&table](const UtilityRow& r) {
    table.row({r.label, CsvTable::num(r.utility), CsvTable::num(r.stderr_value), CsvTable::num(r.value_bsde),
               CsvTable::num(r.gap_sigmas), r.dominated ? "1" : "0"});
  };
  add(rep.optimal);
  for (const auto& r : rep.perturbations) add(r);
  table.write(dir / "utility.csv");
  manifest.add_output("utility.csv");
  std::ofstream txt(dir / "verification.txt");
  txt << format_verification_table(rep);
  manifest.add_output("verification.txt");
  manifest.set("verification.pass", rep.pass() ? "true" : "false");
  manifest.set("value_bsde", rep.value_bsde, 12);
}

void run_oracle_compare(const ExperimentConfig& c, const fs::path& dir, ExperimentManifest& manifest) {
  const MarketSpec& market = c.market;
  for (std::size_t l = 0; l < market.regime_count(); ++l) {
    if (!market.zeta[l].deterministic()) {
      throw ConfigError("market.zeta[" + std::to_string(l) + "]",
                        "oracle-compare requires deterministic terminal factors");
    }
  }
  const SolvedMarket s = solve_market(c, c.paths);
  write_solution_outputs(s, dir, manifest);
  const std::size_t k = market.regime_count();
  Eigen::VectorXd xi(static_cast<Eigen::Index>(k));
  for (std::size_t l = 0; l < k; ++l) xi[static_cast<Eigen::Index>(l)] = std::pow(market.zeta[l].scale, market.gamma);
  const LambdaSqFn lam_sq = [&market](double t, std::size_t l) { return market.lambda(t, l).squaredNorm(); };
  const OdeSolution ode = ode_oracle(market.chain, lam_sq, market.gamma, xi, s.batch.grid(), c.oracle_steps);

  CsvTable table({"t", "component", "Y_solver", "Y_oracle", "rel_err"});
  double worst = 0.0;
  const std::size_t m = s.batch.paths();
  for (std::size_t node = 0; node < ode.nodes.size(); ++node) {
    for (std::size_t l = 0; l < k; ++l) {
      double sum = 0.0;
      for (std::size_t p = 0; p < m; ++p) sum += s.solution[l].y_at(node, p);
      const double ys = sum / static_cast<double>(m);
      const double yo = ode.values[node][static_cast<Eigen::Index>(l)];
      const double rel = std::abs(ys - yo) / std::abs(yo);
      worst = std::max(worst, rel);
      table.row({CsvTable::num(ode.nodes[node]), std::to_string(l), CsvTable::num(ys), CsvTable::num(yo),
                 CsvTable::num(rel)});
    }
  }
  table.write(dir / "oracle_compare.csv");
  manifest.add_output("oracle_compare.csv");
  manifest.set("oracle.max_rel_err", worst, 6);
  manifest.set("oracle.halving_change", ode.halving_change, 6);
}

}  // namespace

ScenarioBatch simulate_market_batch(const ExperimentConfig& c, std::size_t paths) {
  const TimeGrid grid(c.market.horizon, c.steps);
  return simulate_batch(grid, c.market.brownian_dim(), paths, c.market.chain, c.market.initial_regime, c.seed,
                        c.threads);
}

SolvedMarket solve_market(const ExperimentConfig& c, ScenarioBatch batch) {
  const auto start = Clock::now();
  TransformedSystem sys = build_transformed_system(c.market);
  RegressionBasis basis =
      RegressionBasis::polynomial(batch.brownian_dim(), batch.regime_count(), c.solver.basis_degree);
  TerminalSpec terminal = sys.terminal;
  terminal.p = c.integrability_p;
  terminal.q = c.integrability_q;
  PicardResult result = picard_solve(sys.generator, terminal, batch, basis, picard_options(c));
  std::vector<BsdeSolutionGrid> solution = untransform_solution(result.components, c.market.chain);
  const double ms = ms_since(start);
  return SolvedMarket{std::move(sys), std::move(batch), std::move(basis), std::move(result), std::move(solution), ms};
}

SolvedMarket solve_market(const ExperimentConfig& c, std::size_t paths) {
  return solve_market(c, simulate_market_batch(c, paths));
}

ExperimentManifest run_experiment(const ExperimentConfig& c, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  ExperimentManifest manifest;
  manifest.set("name", c.name);
  manifest.set("pipeline", to_string(c.pipeline));
  manifest.set("version", BSDE_VERSION_STRING);
  manifest.set("config_hash", config_hash(c));
  manifest.set("seed", std::to_string(c.seed));
  manifest.set("seed.brownian", std::to_string(derive_stream_seed(c.seed, "brownian")));
  manifest.set("seed.chain", std::to_string(derive_stream_seed(c.seed, "chain")));
  manifest.set("paths", std::to_string(c.pipeline == Pipeline::Portfolio ? c.verification.paths : c.paths));
  manifest.set("steps", std::to_string(c.steps));
  manifest.set("horizon", c.market.horizon, 17);
  manifest.set("threads", std::to_string(c.threads));
  manifest.set("positivity_mode", to_string(c.solver.mode));
  write_json(to_json(c), out_dir / "config.json");
  manifest.add_output("config.json");

  const auto start = Clock::now();
  switch (c.pipeline) {
    case Pipeline::Validate: run_validate(c, out_dir, manifest); break;
    case Pipeline::Simulate: run_simulate(c, out_dir, manifest); break;
    case Pipeline::Solve: {
      const SolvedMarket s = solve_market(c, c.paths);
      write_solution_outputs(s, out_dir, manifest);
      json coeffs = json::array();
      for (const auto& comp : s.transformed.components) coeffs.push_back(coefficients_json(comp));
      write_json(coeffs, out_dir / "coefficients.json");
      manifest.add_output("coefficients.json");
      if (c.save_solution) {
        for (std::size_t l = 0; l < s.solution.size(); ++l) {
          const std::string f = "solution_" + std::to_string(l) + ".csv";
          write_solution_csv(s.solution[l], out_dir / f);
          manifest.add_output(f);
        }
      }
      break;
    }
    case Pipeline::VerifyBounds: run_verify_bounds(c, out_dir, manifest); break;
    case Pipeline::Portfolio: run_portfolio(c, out_dir, manifest); break;
    case Pipeline::OracleCompare: run_oracle_compare(c, out_dir, manifest); break;
  }
  manifest.set("wall_time_ms.total", ms_since(start), 6);
  manifest.write(out_dir / "manifest.txt");
  return manifest;
}

std::vector<std::string> emit_plot_data(const fs::path& run_dir) {
  const ExperimentManifest manifest = ExperimentManifest::read(run_dir / "manifest.txt");
  for (const auto& f : manifest.outputs()) {
    if (!fs::exists(run_dir / f)) throw MissingOutputError("run output missing: " + (run_dir / f).string());
  }
  auto has = [&manifest](const std::string& f) {
    for (const auto& o : manifest.outputs()) {
      if (o == f) return true;
    }
    return false;
  };
  std::vector<std::string> written;
  auto copy_table = [&](const std::string& from, const std::string& to, std::vector<std::string> keep) {
    const CsvTable src = CsvTable::read(run_dir / from);
    std::vector<std::size_t> idx;
    for (const auto& col : keep) {
      std::size_t found = src.columns().size();
      for (std::size_t i = 0; i < src.columns().size(); ++i) {
        if (src.columns()[i] == col) found = i;
      }
      if (found == src.columns().size()) throw MissingOutputError(from + " lacks column " + col);
      idx.push_back(found);
    }
    CsvTable out(keep);
    for (const auto& r : src.rows()) {
      std::vector<std::string> cells;
      for (std::size_t i : idx) cells.push_back(r.at(i));
      out.row(cells);
    }
    out.write(run_dir / to);
    written.push_back(to);
  };
  if (has("picard.csv")) copy_table("picard.csv", "plot_picard_deltas.csv", {"iteration", "delta_y", "delta_z"});
  if (has("y0.csv")) copy_table("y0.csv", "plot_y0.csv", {"component", "y0", "stderr"});
  if (has("estimates.csv")) {
    copy_table("estimates.csv", "plot_estimates.csv", {"check", "lhs", "rhs", "slack", "pass"});
  }
  if (has("utility.csv")) {
    copy_table("utility.csv", "plot_utility_bars.csv", {"label", "utility", "stderr", "value_bsde"});
  }
  if (has("oracle_compare.csv")) {
    copy_table("oracle_compare.csv", "plot_oracle_curves.csv", {"t", "component", "Y_solver", "Y_oracle"});
  }
  if (has("scenario_summary.csv")) {
    const CsvTable src = CsvTable::read(run_dir / "scenario_summary.csv");
    std::vector<std::string> keep;
    for (const auto& col : src.columns()) {
      if (col != "w_mean" && col != "w_var") keep.push_back(col);
    }
    copy_table("scenario_summary.csv", "plot_regime_occupancy.csv", keep);
  }
  if (written.empty()) throw MissingOutputError("run in " + run_dir.string() + " has no plottable outputs");
  return written;
}

}  // namespace bsde
