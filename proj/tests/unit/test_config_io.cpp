#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "bsde/config.hpp"
#include "bsde/errors.hpp"
#include "bsde/experiment.hpp"
#include "bsde/report_io.hpp"

namespace bsde {
namespace {

namespace fs = std::filesystem;

nlohmann::json doc_for(const std::string& pipeline) {
  auto d = nlohmann::json::parse(R"({
    "name": "unit", "seed": 5, "paths": 400, "steps": 10, "horizon": 1.0,
    "market": {
      "Q": [[-1.0, 1.0], [1.0, -1.0]],
      "regimes": [{"drift": [0.1], "volatility": [[0.5]]}, {"drift": [0.2], "volatility": [[0.5]]}],
      "zeta": [1.0, 1.0], "gamma": 0.5, "mu": 0.01
    }
  })");
  d["pipeline"] = pipeline;
  return d;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bsde_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string field_of(const nlohmann::json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(Config, ShippedConfigsRoundTrip) {
  for (const auto& entry : fs::directory_iterator(fs::path(BSDE_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().string());
    const ExperimentConfig c = load_config(entry.path());
    const ExperimentConfig back = parse_config(to_json(c));
    EXPECT_TRUE(equivalent(c, back));
    EXPECT_EQ(config_hash(c), config_hash(back));
  }
}

TEST(Config, Defaults) {
  const ExperimentConfig c = parse_config(doc_for("solve"));
  EXPECT_EQ(c.pipeline, Pipeline::Solve);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.solver.tolerance, 1e-4);
  EXPECT_EQ(c.integrability_p, 2.0);
  EXPECT_EQ(c.market.regime_count(), 2u);
}

TEST(Config, UnknownKeyNamesField) {
  auto d = doc_for("solve");
  d["market"]["colour"] = 1;
  EXPECT_EQ(field_of(d), "market.colour");
  d = doc_for("solve");
  d["extra"] = true;
  EXPECT_EQ(field_of(d), "extra");
}

TEST(Config, BadFieldsNamed) {
  auto d = doc_for("solve");
  d["paths"] = -3;
  EXPECT_EQ(field_of(d), "paths");
  d = doc_for("solve");
  d["market"]["Q"] = nlohmann::json::parse("[[-1, 2], [1, -1]]");
  EXPECT_EQ(field_of(d), "market.Q");
  d = doc_for("solve");
  d["solver"] = {{"mode", "sideways"}};
  EXPECT_EQ(field_of(d), "solver.mode");
  d = doc_for("launch");
  EXPECT_EQ(field_of(d), "pipeline");
}

TEST(Config, OneThirdCitesDelta) {
  auto d = doc_for("solve");
  d["market"]["gamma"] = 1.0 / 3.0;
  try {
    parse_config(d);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "market.gamma");
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos);
  }
}

TEST(Config, HashTracksContent) {
  const ExperimentConfig a = parse_config(doc_for("solve"));
  auto d = doc_for("solve");
  d["seed"] = 6;
  const ExperimentConfig b = parse_config(d);
  EXPECT_FALSE(equivalent(a, b));
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Manifest, WriteRead) {
  const fs::path dir = scratch("manifest");
  fs::create_directories(dir);
  ExperimentManifest m;
  m.set("name", "x");
  m.set("y0.0", 1.0379893, 10);
  m.add_output("a.csv");
  m.add_output("b.json");
  m.write(dir / "manifest.txt");
  const auto r = ExperimentManifest::read(dir / "manifest.txt");
  EXPECT_EQ(r.get("name"), "x");
  EXPECT_EQ(r.get("y0.0"), "1.0379893");
  EXPECT_TRUE(r.has("outputs"));
  ASSERT_EQ(r.outputs().size(), 2u);
  EXPECT_EQ(r.outputs()[1], "b.json");
  EXPECT_THROW(ExperimentManifest::read(dir / "missing.txt"), MissingOutputError);
  fs::remove_all(dir);
}

TEST(Csv, WriteRead) {
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  CsvTable t({"a", "b"});
  t.row({"1", CsvTable::num(0.1)}).row({"x", CsvTable::num(1e-300)});
  t.write(dir / "t.csv");
  const auto r = CsvTable::read(dir / "t.csv");
  EXPECT_EQ(r.columns(), t.columns());
  EXPECT_EQ(r.rows(), t.rows());
  EXPECT_EQ(std::stod(r.rows()[0][1]), 0.1);
  EXPECT_THROW(t.row({"only one"}), InternalError);
  fs::remove_all(dir);
}

TEST(Format, Y0TenDecimals) {
  EXPECT_EQ(format_y0(1.0), "1.0000000000");
  EXPECT_EQ(format_y0(1.02020134), "1.0202013400");
}

TEST(Experiment, PlotDataNeedsRun) {
  const fs::path dir = scratch("plot_missing");
  EXPECT_THROW(emit_plot_data(dir), MissingOutputError);
}

TEST(Experiment, SolveIsDeterministic) {
  const ExperimentConfig c = parse_config(doc_for("solve"));
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const auto ma = run_experiment(c, a);
  const auto mb = run_experiment(c, b);
  EXPECT_EQ(ma.get("y0.0"), mb.get("y0.0"));
  EXPECT_EQ(ma.get("y0.1"), mb.get("y0.1"));
  EXPECT_EQ(ma.get("config_hash"), config_hash(c));
  EXPECT_TRUE(fs::exists(a / "y0.csv"));
  EXPECT_TRUE(fs::exists(a / "config.json"));
  EXPECT_TRUE(equivalent(load_config(a / "config.json"), c));
  const auto files = emit_plot_data(a);
  EXPECT_FALSE(files.empty());
  fs::remove(a / "y0.csv");
  EXPECT_THROW(emit_plot_data(a), MissingOutputError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, OracleCompareTable) {
  const ExperimentConfig c = parse_config(doc_for("oracle-compare"));
  const fs::path dir = scratch("oracle");
  const auto m = run_experiment(c, dir);
  const auto t = CsvTable::read(dir / "oracle_compare.csv");
  const std::vector<std::string> cols{"t", "component", "Y_solver", "Y_oracle", "rel_err"};
  EXPECT_EQ(t.columns(), cols);
  EXPECT_EQ(t.rows().size(), 2u * 11u);
  EXPECT_LT(std::stod(m.get("oracle.max_rel_err")), 1e-2);
  fs::remove_all(dir);
}

TEST(Experiment, OracleCompareRejectsRandomTerminal) {
  auto d = doc_for("oracle-compare");
  d["market"]["zeta"] = nlohmann::json::parse(R"([{"scale": 1, "vol": 0.1}, 1.0])");
  const ExperimentConfig c = parse_config(d);
  const fs::path dir = scratch("oracle_random");
  EXPECT_THROW(run_experiment(c, dir), ConfigError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace bsde
