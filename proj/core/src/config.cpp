#include "bsde/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "bsde/errors.hpp"
#include "bsde/rng.hpp"

namespace bsde {

using nlohmann::json;

std::string to_string(Pipeline pipeline) {
  switch (pipeline) {
    case Pipeline::Validate: return "validate";
    case Pipeline::Simulate: return "simulate";
    case Pipeline::Solve: return "solve";
    case Pipeline::VerifyBounds: return "verify-bounds";
    case Pipeline::Portfolio: return "portfolio";
    case Pipeline::OracleCompare: return "oracle-compare";
  }
  throw InternalError("unknown pipeline");
}

Pipeline pipeline_from_string(const std::string& name) {
  for (Pipeline p : {Pipeline::Validate, Pipeline::Simulate, Pipeline::Solve, Pipeline::VerifyBounds,
                     Pipeline::Portfolio, Pipeline::OracleCompare}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("pipeline", "unknown pipeline '" + name + "'");
}

SolveOptions SolverConfig::solve_options() const {
  SolveOptions o;
  o.mode = mode;
  o.floor = floor;
  o.inner_tolerance = inner_tolerance;
  o.inner_max_iterations = inner_max_iterations;
  return o;
}

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

double get_number(const json& obj, const std::string& where, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(join(where, key), "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(where, key), "must be finite");
  return x;
}

std::uint64_t get_unsigned(const json& obj, const std::string& where, const char* key,
                           std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(join(where, key), "expected a nonnegative integer");
}

std::string get_string(const json& obj, const std::string& where, const char* key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(join(where, key), "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd parse_vector(const json& v, const std::string& where) {
  if (v.is_number()) return Eigen::VectorXd::Constant(1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ConfigError(where, "expected a nonempty array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]", "expected a number");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

Eigen::MatrixXd parse_matrix(const json& v, const std::string& where) {
  if (v.is_number()) return Eigen::MatrixXd::Constant(1, 1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ConfigError(where, "expected a nonempty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  Eigen::MatrixXd out;
  for (std::size_t r = 0; r < rows; ++r) {
    const Eigen::VectorXd row = parse_vector(v[r], where + "[" + std::to_string(r) + "]");
    if (r == 0) {
      cols = static_cast<std::size_t>(row.size());
      out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    } else if (static_cast<std::size_t>(row.size()) != cols) {
      throw ConfigError(where, "rows have different lengths");
    }
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

RegimeCoefficients parse_regime(const json& obj, const std::string& where) {
  reject_unknown(obj, where, {"drift", "volatility", "drift_t", "volatility_t"});
  if (!obj.contains("drift")) throw ConfigError(join(where, "drift"), "missing");
  if (!obj.contains("volatility")) throw ConfigError(join(where, "volatility"), "missing");
  RegimeCoefficients c;
  c.drift.push_back(parse_vector(obj.at("drift"), join(where, "drift")));
  c.volatility.push_back(parse_matrix(obj.at("volatility"), join(where, "volatility")));
  if (obj.contains("drift_t")) {
    const json& arr = obj.at("drift_t");
    if (!arr.is_array()) throw ConfigError(join(where, "drift_t"), "expected an array of vectors");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      c.drift.push_back(parse_vector(arr[i], join(where, "drift_t") + "[" + std::to_string(i) + "]"));
    }
  }
  if (obj.contains("volatility_t")) {
    const json& arr = obj.at("volatility_t");
    if (!arr.is_array()) throw ConfigError(join(where, "volatility_t"), "expected an array of matrices");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      c.volatility.push_back(
          parse_matrix(arr[i], join(where, "volatility_t") + "[" + std::to_string(i) + "]"));
    }
  }
  return c;
}

TerminalFactor parse_zeta(const json& v, const std::string& where) {
  TerminalFactor z;
  if (v.is_number()) {
    z.scale = v.get<double>();
    return z;
  }
  reject_unknown(v, where, {"scale", "vol", "brownian_index"});
  z.scale = get_number(v, where, "scale", 1.0);
  z.vol = get_number(v, where, "vol", 0.0);
  z.brownian_index = get_unsigned(v, where, "brownian_index", 0);
  return z;
}

MarketSpec parse_market(const json& obj, double horizon) {
  const std::string where = "market";
  reject_unknown(obj, where, {"Q", "regimes", "zeta", "gamma", "wealth", "initial_regime", "mu", "D"});
  MarketSpec m;
  m.horizon = horizon;
  if (obj.contains("Q")) {
    const Eigen::MatrixXd q = parse_matrix(obj.at("Q"), "market.Q");
    try {
      m.chain = ChainGenerator(q);
    } catch (const ConfigError& e) {
      throw ConfigError("market.Q", e.what());
    }
  }
  if (!obj.contains("regimes")) throw ConfigError("market.regimes", "missing");
  const json& regimes = obj.at("regimes");
  if (!regimes.is_array()) throw ConfigError("market.regimes", "expected an array");
  for (std::size_t l = 0; l < regimes.size(); ++l) {
    m.regimes.push_back(parse_regime(regimes[l], "market.regimes[" + std::to_string(l) + "]"));
  }
  if (obj.contains("zeta")) {
    const json& zeta = obj.at("zeta");
    if (!zeta.is_array()) throw ConfigError("market.zeta", "expected an array");
    for (std::size_t l = 0; l < zeta.size(); ++l) {
      m.zeta.push_back(parse_zeta(zeta[l], "market.zeta[" + std::to_string(l) + "]"));
    }
  } else {
    m.zeta.assign(m.regime_count(), TerminalFactor{});
  }
  m.gamma = get_number(obj, where, "gamma", m.gamma);
  m.wealth = get_number(obj, where, "wealth", m.wealth);
  m.initial_regime = get_unsigned(obj, where, "initial_regime", 0);
  m.mu = get_number(obj, where, "mu", m.mu);
  m.bound_d = get_number(obj, where, "D", 0.0);
  return m;
}

json market_json(const MarketSpec& m) {
  json out;
  out["Q"] = matrix_json(m.chain.rates());
  json regimes = json::array();
  for (const auto& c : m.regimes) {
    json r;
    r["drift"] = vector_json(c.drift.front());
    r["volatility"] = matrix_json(c.volatility.front());
    if (c.drift.size() > 1) {
      json arr = json::array();
      for (std::size_t i = 1; i < c.drift.size(); ++i) arr.push_back(vector_json(c.drift[i]));
      r["drift_t"] = arr;
    }
    if (c.volatility.size() > 1) {
      json arr = json::array();
      for (std::size_t i = 1; i < c.volatility.size(); ++i) arr.push_back(matrix_json(c.volatility[i]));
      r["volatility_t"] = arr;
    }
    regimes.push_back(r);
  }
  out["regimes"] = regimes;
  json zeta = json::array();
  for (const auto& z : m.zeta) {
    if (z.deterministic() && z.brownian_index == 0) {
      zeta.push_back(z.scale);
    } else {
      zeta.push_back({{"scale", z.scale}, {"vol", z.vol}, {"brownian_index", z.brownian_index}});
    }
  }
  out["zeta"] = zeta;
  out["gamma"] = m.gamma;
  out["wealth"] = m.wealth;
  out["initial_regime"] = m.initial_regime;
  out["mu"] = m.mu;
  out["D"] = m.bound_d;
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  reject_unknown(doc, "", {"name", "pipeline", "seed", "paths", "steps", "horizon", "threads", "market",
                           "solver", "integrability", "verification", "oracle", "output", "save_solution"});
  ExperimentConfig c;
  c.name = get_string(doc, "", "name", "");
  c.pipeline = pipeline_from_string(get_string(doc, "", "pipeline", "solve"));
  c.seed = get_unsigned(doc, "", "seed", c.seed);
  c.paths = get_unsigned(doc, "", "paths", c.paths);
  c.steps = get_unsigned(doc, "", "steps", c.steps);
  c.threads = static_cast<unsigned>(get_unsigned(doc, "", "threads", c.threads));
  const double horizon = get_number(doc, "", "horizon", 1.0);
  if (!doc.contains("market")) throw ConfigError("market", "missing");
  c.market = parse_market(doc.at("market"), horizon);

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    reject_unknown(s, "solver", {"mode", "tolerance", "max_iterations", "basis_degree", "floor",
                                 "inner_tolerance", "inner_max_iterations"});
    try {
      c.solver.mode = positivity_mode_from_string(get_string(s, "solver", "mode", "log"));
    } catch (const ConfigError& e) {
      throw ConfigError("solver.mode", e.what());
    }
    c.solver.tolerance = get_number(s, "solver", "tolerance", c.solver.tolerance);
    c.solver.max_iterations = get_unsigned(s, "solver", "max_iterations", c.solver.max_iterations);
    c.solver.basis_degree = static_cast<unsigned>(get_unsigned(s, "solver", "basis_degree", c.solver.basis_degree));
    c.solver.floor = get_number(s, "solver", "floor", c.solver.floor);
    c.solver.inner_tolerance = get_number(s, "solver", "inner_tolerance", c.solver.inner_tolerance);
    c.solver.inner_max_iterations = static_cast<int>(
        get_unsigned(s, "solver", "inner_max_iterations", static_cast<std::uint64_t>(c.solver.inner_max_iterations)));
  }
  if (doc.contains("integrability")) {
    const json& s = doc.at("integrability");
    reject_unknown(s, "integrability", {"p", "q"});
    c.integrability_p = get_number(s, "integrability", "p", c.integrability_p);
    c.integrability_q = get_number(s, "integrability", "q", c.integrability_q);
  }
  if (doc.contains("verification")) {
    const json& s = doc.at("verification");
    reject_unknown(s, "verification", {"paths", "scales", "constant_strategy", "strategy_file", "sigmas"});
    c.verification.paths = get_unsigned(s, "verification", "paths", c.verification.paths);
    if (s.contains("scales")) {
      const Eigen::VectorXd v = parse_vector(s.at("scales"), "verification.scales");
      c.verification.scales.assign(v.data(), v.data() + v.size());
    }
    if (s.contains("constant_strategy")) {
      if (!s.at("constant_strategy").is_boolean()) {
        throw ConfigError("verification.constant_strategy", "expected a boolean");
      }
      c.verification.constant_strategy = s.at("constant_strategy").get<bool>();
    }
    c.verification.strategy_file = get_string(s, "verification", "strategy_file", "");
    c.verification.sigmas = get_number(s, "verification", "sigmas", c.verification.sigmas);
  }
  if (doc.contains("oracle")) {
    const json& s = doc.at("oracle");
    reject_unknown(s, "oracle", {"steps"});
    c.oracle_steps = get_unsigned(s, "oracle", "steps", c.oracle_steps);
  }
  c.output = get_string(doc, "", "output", c.output);
  if (doc.contains("save_solution")) {
    if (!doc.at("save_solution").is_boolean()) throw ConfigError("save_solution", "expected a boolean");
    c.save_solution = doc.at("save_solution").get<bool>();
  }

  if (c.paths < 2) throw ConfigError("paths", "at least 2 paths are required");
  if (c.steps < 1) throw ConfigError("steps", "at least 1 step is required");
  if (c.threads < 1) throw ConfigError("threads", "must be at least 1");
  if (!(c.solver.tolerance > 0.0)) throw ConfigError("solver.tolerance", "must be positive");
  if (c.solver.max_iterations < 1) throw ConfigError("solver.max_iterations", "must be at least 1");
  if (!(c.solver.floor > 0.0)) throw ConfigError("solver.floor", "must be positive");
  if (!(c.solver.inner_tolerance > 0.0)) throw ConfigError("solver.inner_tolerance", "must be positive");
  if (c.solver.inner_max_iterations < 1) throw ConfigError("solver.inner_max_iterations", "must be at least 1");
  if (!(c.integrability_p >= 2.0)) throw ConfigError("integrability.p", "must be at least 2");
  if (!(c.integrability_q > 1.0)) throw ConfigError("integrability.q", "must exceed 1");
  if (c.verification.paths < 2) throw ConfigError("verification.paths", "at least 2 paths are required");
  if (!(c.verification.sigmas > 0.0)) throw ConfigError("verification.sigmas", "must be positive");
  if (c.oracle_steps < 1) throw ConfigError("oracle.steps", "must be at least 1");
  c.market.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config", "cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  ExperimentConfig c = parse_config(doc);
  c.base_dir = file.parent_path();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json out;
  out["name"] = c.name;
  out["pipeline"] = to_string(c.pipeline);
  out["seed"] = c.seed;
  out["paths"] = c.paths;
  out["steps"] = c.steps;
  out["horizon"] = c.market.horizon;
  out["threads"] = c.threads;
  out["market"] = market_json(c.market);
  out["solver"] = {{"mode", to_string(c.solver.mode)},
                   {"tolerance", c.solver.tolerance},
                   {"max_iterations", c.solver.max_iterations},
                   {"basis_degree", c.solver.basis_degree},
                   {"floor", c.solver.floor},
                   {"inner_tolerance", c.solver.inner_tolerance},
                   {"inner_max_iterations", c.solver.inner_max_iterations}};
  out["integrability"] = {{"p", c.integrability_p}, {"q", c.integrability_q}};
  out["verification"] = {{"paths", c.verification.paths},
                         {"scales", c.verification.scales},
                         {"constant_strategy", c.verification.constant_strategy},
                         {"strategy_file", c.verification.strategy_file},
                         {"sigmas", c.verification.sigmas}};
  out["oracle"] = {{"steps", c.oracle_steps}};
  out["output"] = c.output;
  out["save_solution"] = c.save_solution;
  return out;
}

namespace {

bool same_regime(const RegimeCoefficients& a, const RegimeCoefficients& b) {
  if (a.drift.size() != b.drift.size() || a.volatility.size() != b.volatility.size()) return false;
  for (std::size_t i = 0; i < a.drift.size(); ++i) {
    if (a.drift[i].size() != b.drift[i].size() || a.drift[i] != b.drift[i]) return false;
  }
  for (std::size_t i = 0; i < a.volatility.size(); ++i) {
    if (a.volatility[i].rows() != b.volatility[i].rows() || a.volatility[i].cols() != b.volatility[i].cols() ||
        a.volatility[i] != b.volatility[i]) {
      return false;
    }
  }
  return true;
}

bool same_market(const MarketSpec& a, const MarketSpec& b) {
  if (a.chain.rates().rows() != b.chain.rates().rows() || a.chain.rates() != b.chain.rates()) return false;
  if (a.regimes.size() != b.regimes.size() || a.zeta.size() != b.zeta.size()) return false;
  for (std::size_t l = 0; l < a.regimes.size(); ++l) {
    if (!same_regime(a.regimes[l], b.regimes[l])) return false;
  }
  for (std::size_t l = 0; l < a.zeta.size(); ++l) {
    if (a.zeta[l].scale != b.zeta[l].scale || a.zeta[l].vol != b.zeta[l].vol ||
        a.zeta[l].brownian_index != b.zeta[l].brownian_index) {
      return false;
    }
  }
  return a.gamma == b.gamma && a.wealth == b.wealth && a.initial_regime == b.initial_regime &&
         a.mu == b.mu && a.bound_d == b.bound_d && a.horizon == b.horizon;
}

}  // namespace

bool equivalent(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.name == b.name && a.pipeline == b.pipeline && a.seed == b.seed && a.paths == b.paths &&
         a.steps == b.steps && a.threads == b.threads && same_market(a.market, b.market) &&
         a.solver.mode == b.solver.mode && a.solver.tolerance == b.solver.tolerance &&
         a.solver.max_iterations == b.solver.max_iterations &&
         a.solver.basis_degree == b.solver.basis_degree && a.solver.floor == b.solver.floor &&
         a.solver.inner_tolerance == b.solver.inner_tolerance &&
         a.solver.inner_max_iterations == b.solver.inner_max_iterations &&
         a.integrability_p == b.integrability_p && a.integrability_q == b.integrability_q &&
         a.verification.paths == b.verification.paths && a.verification.scales == b.verification.scales &&
         a.verification.constant_strategy == b.verification.constant_strategy &&
         a.verification.strategy_file == b.verification.strategy_file &&
         a.verification.sigmas == b.verification.sigmas && a.oracle_steps == b.oracle_steps &&
         a.output == b.output && a.save_solution == b.save_solution;
}

std::string config_hash(const ExperimentConfig& config) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(config).dump());
  return out.str();
}

}  // namespace bsde
