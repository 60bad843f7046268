// Command-line front end: one subcommand per pipeline, plus emit-plot-data.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bsde/config.hpp"
#include "bsde/errors.hpp"
#include "bsde/experiment.hpp"
#include "bsde/report_io.hpp"

namespace {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kNumerical = 3, kMissing = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* cfg = cmd->add_option("--config", o.config, "Experiment configuration (JSON)");
  if (config_required) cfg->required();
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--paths", o.paths, "Monte Carlo paths M (for portfolio: the verification batch)");
  cmd->add_option("--steps", o.steps, "Time steps N");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads");
}

bsde::ExperimentConfig resolve(const Overrides& o, bsde::Pipeline pipeline) {
  bsde::ExperimentConfig c = bsde::load_config(o.config);
  const fs::path base = c.base_dir;
  nlohmann::json doc = bsde::to_json(c);
  doc["pipeline"] = bsde::to_string(pipeline);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.paths) {
    doc["paths"] = *o.paths;
    if (pipeline == bsde::Pipeline::Portfolio) doc["verification"]["paths"] = *o.paths;
  }
  if (o.steps) doc["steps"] = *o.steps;
  if (o.threads) doc["threads"] = *o.threads;
  if (!o.out.empty()) doc["output"] = o.out;
  c = bsde::parse_config(doc);  // re-validates the overridden values
  c.base_dir = base;
  return c;
}

void print_tables(const fs::path& out) {
  if (fs::exists(out / "picard.csv")) {
    const auto t = bsde::CsvTable::read(out / "picard.csv");
    std::printf("\n%9s %14s %14s %10s\n", "iteration", "delta_y", "delta_z", "ms");
    for (const auto& r : t.rows()) {
      std::printf("%9s %14.6e %14.6e %10.1f\n", r[0].c_str(), std::stod(r[1]), std::stod(r[2]), std::stod(r[3]));
    }
  }
  if (fs::exists(out / "estimates.csv")) {
    const auto t = bsde::CsvTable::read(out / "estimates.csv");
    std::printf("\n%-28s %14s %14s %6s\n", "check", "lhs", "rhs", "result");
    for (const auto& r : t.rows()) {
      const char* verdict = r[7] == "1" ? "info" : (r[6] == "1" ? "PASS" : "FAIL");
      std::printf("%-28s %14.6g %14.6g %6s\n", r[0].c_str(), std::stod(r[1]), std::stod(r[2]), verdict);
    }
  }
  if (fs::exists(out / "verification.txt")) {
    std::ifstream in(out / "verification.txt");
    std::cout << "\n" << in.rdbuf();
  }
  std::cout << "\n";
}

void print_summary(const bsde::ExperimentManifest& m, const fs::path& out) {
  std::cout << "pipeline: " << m.get("pipeline") << "\n";
  std::cout << "output:   " << out.string() << "\n";
  for (const auto& [key, value] : m.entries()) {
    if (key.rfind("y0.", 0) == 0) std::cout << "Y0[" << key.substr(3) << "] = " << value << "\n";
  }
  for (const char* key : {"picard.iterations", "picard.converged", "validation.ok", "estimates.pass",
                          "verification.pass", "value_bsde", "oracle.max_rel_err", "wall_time_ms.total"}) {
    if (m.has(key)) std::cout << key << " = " << m.get(key) << "\n";
  }
}

int run_pipeline(const Overrides& o, bsde::Pipeline pipeline) {
  const bsde::ExperimentConfig c = resolve(o, pipeline);
  const fs::path out = c.output;
  const bsde::ExperimentManifest m = bsde::run_experiment(c, out);
  print_summary(m, out);
  print_tables(out);
  return kOk;
}

int run_plot(const Overrides& o) {
  fs::path dir = o.out;
  if (dir.empty()) {
    if (o.config.empty()) throw bsde::ConfigError("--out", "give the run directory via --out or --config");
    dir = bsde::load_config(o.config).output;
  }
  for (const auto& f : bsde::emit_plot_data(dir)) std::cout << (dir / f).string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional singular quadratic BSDE solver and regime-switching portfolio tools"};
  app.require_subcommand(1);
  Overrides o;
  struct Entry {
    const char* name;
    const char* help;
    bsde::Pipeline pipeline;
  };
  const Entry entries[] = {
      {"validate", "Check generator, terminal and market assumptions", bsde::Pipeline::Validate},
      {"simulate", "Simulate and save the Brownian/regime scenario batch", bsde::Pipeline::Simulate},
      {"solve", "Solve the transformed system by Picard iteration", bsde::Pipeline::Solve},
      {"verify-bounds", "Solve, then check the a-priori estimates", bsde::Pipeline::VerifyBounds},
      {"portfolio", "Solve and verify optimality of the extracted strategy", bsde::Pipeline::Portfolio},
      {"oracle-compare", "Compare the solver against the deterministic ODE oracle", bsde::Pipeline::OracleCompare},
  };
  std::optional<bsde::Pipeline> chosen;
  for (const auto& e : entries) {
    CLI::App* cmd = app.add_subcommand(e.name, e.help);
    add_common(cmd, o, true);
    const bsde::Pipeline p = e.pipeline;
    cmd->callback([&chosen, p] { chosen = p; });
  }
  bool plot = false;
  CLI::App* plot_cmd = app.add_subcommand("emit-plot-data", "Write plot_*.csv tables for a finished run");
  add_common(plot_cmd, o, false);
  plot_cmd->callback([&plot] { plot = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (plot) return run_plot(o);
    return run_pipeline(o, *chosen);
  } catch (const bsde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bsde::NumericalError& e) {
    std::cerr << "numerical error in " << e.what() << "\n";
    return kNumerical;
  } catch (const bsde::MissingOutputError& e) {
    std::cerr << "missing output: " << e.what() << "\n";
    return kMissing;
  } catch (const bsde::DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
