#include "bsde/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bsde/errors.hpp"

namespace bsde {

using nlohmann::json;

namespace {

/// JSON has no infinities or NaN; they are written as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

}  // namespace

json to_json(const ValidationReport& report) {
  json out;
  out["ok"] = report.ok();
  out["violations"] = report.violation_count();
  out["evaluated"] = report.evaluated;
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"check", e.check},
                       {"probe", e.probe},
                       {"lhs", num(e.lhs)},
                       {"rhs", num(e.rhs)},
                       {"pass", e.pass},
                       {"stderr", num(e.stderr_value)}});
  }
  out["entries"] = entries;
  return out;
}

json to_json(const NondegeneracyReport& report) {
  json out;
  out["mu"] = report.mu;
  out["worst_margin"] = num(report.worst_margin);
  out["worst_t"] = report.worst_t;
  out["worst_regime"] = report.worst_regime;
  out["pass"] = report.pass;
  return out;
}

json to_json(const EstimateReport& r) {
  json out;
  out["check"] = r.check;
  out["lhs"] = num(r.lhs);
  out["rhs"] = num(r.rhs);
  out["slack"] = num(r.slack);
  out["lhs_stderr"] = num(r.lhs_stderr);
  out["rhs_stderr"] = num(r.rhs_stderr);
  out["sigmas"] = r.sigmas;
  out["pass"] = r.pass;
  out["informational"] = r.informational;
  out["warnings"] = r.warnings;
  json details = json::object();
  for (const auto& [k, v] : r.details) details[k] = num(v);
  out["details"] = details;
  return out;
}

json to_json(const ContractionHorizon& h) {
  return {{"epsilon", num(h.epsilon)}, {"m0", h.m0}};
}

json to_json(const PicardReport& r) {
  json out;
  out["converged"] = r.converged;
  out["tolerance"] = r.tolerance;
  out["iterations"] = r.iterations();
  out["horizon"] = to_json(r.horizon);
  out["within_heuristic_bound"] = r.within_heuristic_bound;
  out["fitted_ratio"] = num(r.fitted_ratio());
  json hist = json::array();
  for (const auto& h : r.history) {
    hist.push_back({{"iteration", h.iteration},
                    {"delta_y", num(h.delta_y)},
                    {"delta_z", num(h.delta_z)},
                    {"wall_time_ms", h.wall_time_ms}});
  }
  out["history"] = hist;
  return out;
}

namespace {

json row_json(const UtilityRow& r) {
  return {{"label", r.label},
          {"utility", num(r.utility)},
          {"stderr", num(r.stderr_value)},
          {"value_bsde", num(r.value_bsde)},
          {"gap_sigmas", num(r.gap_sigmas)},
          {"dominated", r.dominated}};
}

}  // namespace

json to_json(const VerificationReport& r) {
  json out;
  out["y0"] = num(r.y0);
  out["value_bsde"] = num(r.value_bsde);
  out["optimal"] = row_json(r.optimal);
  out["equality_pass"] = r.equality_pass;
  out["dominance_pass"] = r.dominance_pass;
  out["pass"] = r.pass();
  json rows = json::array();
  for (const auto& p : r.perturbations) rows.push_back(row_json(p));
  out["perturbations"] = rows;
  out["diagnostics"] = {{"strategy_sup", num(r.strategy_sup)},
                        {"q_martingale_mean", num(r.q_martingale_mean)},
                        {"q_martingale_stderr", num(r.q_martingale_stderr)},
                        {"flagged_nodes", r.flagged_nodes},
                        {"heuristic", true}};
  return out;
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable& CsvTable::row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) throw InternalError("csv row has the wrong number of cells");
  rows_.push_back(std::move(cells));
  return *this;
}

std::string CsvTable::num(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void CsvTable::write(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
}

CsvTable CsvTable::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error("empty table " + file.string());
  CsvTable t(split(line));
  while (std::getline(in, line)) {
    if (!line.empty()) t.row(split(line));
  }
  return t;
}

void write_json(const json& doc, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << doc.dump(2) << '\n';
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  return json::parse(in);
}

void write_solution_csv(const BsdeSolutionGrid& sol, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << "node,t,path,Y";
  for (std::size_t j = 0; j < sol.dim; ++j) out << ",Z" << (j + 1);
  out << '\n';
  const std::size_t steps = sol.grid.steps();
  for (std::size_t node = 0; node < sol.grid.node_count(); ++node) {
    for (std::size_t path = 0; path < sol.paths; ++path) {
      out << node << ',' << CsvTable::num(sol.grid[node]) << ',' << path << ',' << CsvTable::num(sol.y_at(node, path));
      for (std::size_t j = 0; j < sol.dim; ++j) {
        out << ',';
        if (node < steps) out << CsvTable::num(sol.z_at(node, path)[j]);
      }
      out << '\n';
    }
  }
}

json coefficients_json(const BsdeSolutionGrid& sol) {
  json steps = json::array();
  auto vec = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
    return a;
  };
  for (const auto& c : sol.coefficients) {
    json z = json::array();
    for (const auto& v : c.z) z.push_back(vec(v));
    steps.push_back({{"node", c.node}, {"state", vec(c.state)}, {"z", z}, {"ridge", c.ridge}});
  }
  return {{"positivity_mode", to_string(sol.options.mode)},
          {"state", sol.options.mode == PositivityMode::LogTransform ? "log Y" : "Y"},
          {"steps", steps}};
}

std::string format_verification_table(const VerificationReport& r) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "V_bsde = x^gamma/gamma * Y0 = " << r.value_bsde << "  (Y0 = " << r.y0 << ")\n";
  out << std::left << std::setw(26) << "strategy" << std::right << std::setw(14) << "utility"
      << std::setw(12) << "stderr" << std::setw(12) << "gap/se" << std::setw(10) << "ok" << '\n';
  auto line = [&out](const UtilityRow& row, bool ok) {
    out << std::left << std::setw(26) << row.label << std::right << std::setw(14) << row.utility
        << std::setw(12) << row.stderr_value << std::setw(12) << std::setprecision(2) << row.gap_sigmas
        << std::setprecision(6) << std::setw(10) << (ok ? "yes" : "NO") << '\n';
  };
  line(r.optimal, r.equality_pass);
  for (const auto& p : r.perturbations) line(p, p.dominated);
  out << "sup|p*| = " << r.strategy_sup << ", E^Q[X_T/x] = " << r.q_martingale_mean << " +/- "
      << r.q_martingale_stderr << ", flagged nodes = " << r.flagged_nodes << '\n';
  return out.str();
}

}  // namespace bsde
