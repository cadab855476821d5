#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ezcoal/baselines.hpp"
#include "ezcoal/equilibrium.hpp"
#include "ezcoal/errors.hpp"
#include "ezcoal/model.hpp"
#include "ezcoal/montecarlo.hpp"

namespace ezcoal {

enum class Output {
  ThetaCurves,
  ConsumptionCurves,
  OneAgentCurves,
  PrecommittedCurves,
  EquilibriumVerification,
  MonotonicityReport,
  McValidation,
  ComparisonTable,
};

inline const std::vector<std::pair<Output, std::string>>& output_names() {
  static const std::vector<std::pair<Output, std::string>> names{
      {Output::ThetaCurves, "theta_curves"},
      {Output::ConsumptionCurves, "consumption_curves"},
      {Output::OneAgentCurves, "one_agent_curves"},
      {Output::PrecommittedCurves, "precommitted_curves"},
      {Output::EquilibriumVerification, "equilibrium_verification"},
      {Output::MonotonicityReport, "monotonicity_report"},
      {Output::McValidation, "mc_validation"},
      {Output::ComparisonTable, "comparison_table"},
  };
  return names;
}

struct McConfig {
  std::size_t paths = 100000;
  std::uint64_t seed = 12345;
  Scheme scheme = Scheme::ExactLog;
  std::size_t n_steps = 500;
};

struct Scenario {
  std::string name;
  MarketParams market;
  CoalitionSpec coalition;
  double t0 = 0.0;
  std::size_t n_steps = 1000;
  McConfig mc;
  A1Denominator a1_denominator = A1Denominator::Sigma;
  OneAgentOdeForm one_agent_form = OneAgentOdeForm::Derived;
  std::vector<Output> outputs;

  bool wants(Output o) const {
    return std::find(outputs.begin(), outputs.end(), o) != outputs.end();
  }
  TimeGrid grid() const { return {t0, coalition.horizon, n_steps}; }
  TimeGrid mc_grid() const { return {t0, coalition.horizon, mc.n_steps}; }
};

inline std::vector<Output> all_outputs() {
  std::vector<Output> out;
  for (const auto& [o, _] : output_names()) out.push_back(o);
  return out;
}

/// Empty when the scenario can run; otherwise every problem found.
inline std::vector<std::string> validate_scenario(const Scenario& s) {
  auto out = validate(s.coalition, s.market);
  if (s.name.empty()) out.emplace_back("scenario name must be nonempty");
  if (s.outputs.empty()) out.emplace_back("at least one output must be requested");
  if (!(s.coalition.horizon > s.t0)) out.emplace_back("grid t0 must be below the horizon");
  if (s.n_steps == 0) out.emplace_back("grid n_steps must be positive");
  if (s.mc.paths < 2) out.emplace_back("mc paths must be at least 2");
  if (s.mc.n_steps == 0) out.emplace_back("mc n_steps must be positive");
  return out;
}

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(std::string("missing key '") + key + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "' in " + where + ": " + e.what());
  }
}

template <class T>
T optional(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  return required<T>(obj, key, where);
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& root, const std::string& default_name) {
  using detail::optional;
  using detail::required;
  detail::reject_unknown(root, "config",
                         {"name", "outputs", "market", "coalition", "grid", "mc", "flags"});
  Scenario s;
  s.name = optional<std::string>(root, "name", "config", default_name);

  if (!root.contains("market")) throw ConfigError("missing section 'market'");
  const auto& m = root.at("market");
  detail::reject_unknown(m, "market", {"nu", "mu", "sigma"});
  s.market = {required<double>(m, "nu", "market"), required<double>(m, "mu", "market"),
              required<double>(m, "sigma", "market")};

  if (!root.contains("coalition")) throw ConfigError("missing section 'coalition'");
  const auto& c = root.at("coalition");
  detail::reject_unknown(c, "coalition", {"gamma", "alpha", "horizon", "rhos", "weights"});
  s.coalition.gamma = required<double>(c, "gamma", "coalition");
  s.coalition.alpha = required<double>(c, "alpha", "coalition");
  s.coalition.horizon = required<double>(c, "horizon", "coalition");
  s.coalition.rhos = required<std::vector<double>>(c, "rhos", "coalition");
  if (c.contains("weights")) {
    // only the uniform coalition 1/N is supported
    const auto w = required<std::vector<double>>(c, "weights", "coalition");
    const double uniform = 1.0 / static_cast<double>(s.coalition.rhos.size());
    const bool ok = w.size() == s.coalition.rhos.size() &&
                    std::all_of(w.begin(), w.end(),
                                [&](double v) { return std::abs(v - uniform) <= 1e-12; });
    if (!ok) throw ConfigError("coalition.weights must all equal 1/N");
  }

  if (root.contains("grid")) {
    const auto& g = root.at("grid");
    detail::reject_unknown(g, "grid", {"t0", "n_steps"});
    s.t0 = optional<double>(g, "t0", "grid", s.t0);
    s.n_steps = optional<std::size_t>(g, "n_steps", "grid", s.n_steps);
  }
  if (root.contains("mc")) {
    const auto& mc = root.at("mc");
    detail::reject_unknown(mc, "mc", {"paths", "seed", "scheme", "n_steps"});
    s.mc.paths = optional<std::size_t>(mc, "paths", "mc", s.mc.paths);
    s.mc.seed = optional<std::uint64_t>(mc, "seed", "mc", s.mc.seed);
    s.mc.n_steps = optional<std::size_t>(mc, "n_steps", "mc", s.mc.n_steps);
    const auto scheme = optional<std::string>(mc, "scheme", "mc", "exact_log");
    if (scheme == "exact_log") s.mc.scheme = Scheme::ExactLog;
    else if (scheme == "euler_maruyama") s.mc.scheme = Scheme::EulerMaruyama;
    else throw ConfigError("mc.scheme must be \"exact_log\" or \"euler_maruyama\"");
  }
  if (root.contains("flags")) {
    const auto& f = root.at("flags");
    detail::reject_unknown(f, "flags", {"a1_variance_denominator", "one_agent_ode_form"});
    const auto denom = optional<std::string>(f, "a1_variance_denominator", "flags", "sigma");
    if (denom == "sigma") s.a1_denominator = A1Denominator::Sigma;
    else if (denom == "sigma_squared") s.a1_denominator = A1Denominator::SigmaSquared;
    else throw ConfigError("flags.a1_variance_denominator must be \"sigma\" or \"sigma_squared\"");
    const auto form = optional<std::string>(f, "one_agent_ode_form", "flags", "derived");
    if (form == "derived") s.one_agent_form = OneAgentOdeForm::Derived;
    else if (form == "as_printed") s.one_agent_form = OneAgentOdeForm::AsPrinted;
    else throw ConfigError("flags.one_agent_ode_form must be \"derived\" or \"as_printed\"");
  }
  if (root.contains("outputs")) {
    for (const auto& name : required<std::vector<std::string>>(root, "outputs", "config")) {
      const auto& names = output_names();
      auto it = std::find_if(names.begin(), names.end(),
                             [&](const auto& p) { return p.second == name; });
      if (it == names.end()) throw ConfigError("unknown output '" + name + "'");
      if (!s.wants(it->first)) s.outputs.push_back(it->first);
    }
  } else {
    s.outputs = all_outputs();
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_scenario(root, path.stem().string());
}

/// T=1, mu=0.08, nu=0.02, sigma=0.15, rho=(0.01, 0.2), gamma=0.1, alpha=0.3.
inline Scenario figure1_scenario() {
  Scenario s;
  s.name = "fig1";
  s.market = {0.02, 0.08, 0.15};
  s.coalition = {0.1, 0.3, 1.0, {0.01, 0.2}};
  s.outputs = all_outputs();
  return s;
}

/// T=1, mu=0.2, nu=0.1, sigma=0.05, rho=(0, 0.18), gamma=0.8, alpha=0.25.
inline Scenario figure2_scenario() {
  Scenario s;
  s.name = "fig2";
  s.market = {0.1, 0.2, 0.05};
  s.coalition = {0.8, 0.25, 1.0, {0.0, 0.18}};
  s.outputs = all_outputs();
  return s;
}

// ---------------------------------------------------------------------------
// CSV datasets

struct FigureDataset {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string rho_label(double rho) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", rho);
  return buf;
}

/// Distinct discount rates in order of first appearance.
inline std::vector<double> distinct_rhos(const std::vector<double>& rhos) {
  std::vector<double> out;
  for (double r : rhos) {
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

/// Columns t, theta_i, theta_one_agent_rho<r>, c_eq_i, c_one_agent_rho<r>; one row per node.
inline FigureDataset build_figure_dataset(const EquilibriumSolution& eq,
                                          const std::vector<OneAgentSolution>& one_agent,
                                          bool theta = true, bool consumption = true) {
  FigureDataset ds;
  const std::size_t n = eq.size();
  ds.columns.emplace_back("t");
  if (theta) {
    for (std::size_t i = 0; i < n; ++i) ds.columns.push_back("theta_" + std::to_string(i + 1));
    for (const auto& oa : one_agent) ds.columns.push_back("theta_one_agent_rho" + rho_label(oa.rho()));
  }
  if (consumption) {
    for (std::size_t i = 0; i < n; ++i) ds.columns.push_back("c_eq_" + std::to_string(i + 1));
    for (const auto& oa : one_agent) ds.columns.push_back("c_one_agent_rho" + rho_label(oa.rho()));
  }
  for (const auto& oa : one_agent) {
    if (!(oa.theta().grid() == eq.grid())) {
      throw GridMismatch("one-agent and equilibrium curves must share one grid");
    }
  }
  const auto& grid = eq.grid();
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    std::vector<double> row{grid.node(k)};
    if (theta) {
      for (std::size_t i = 0; i < n; ++i) row.push_back(eq.theta().at_node(k, i));
      for (const auto& oa : one_agent) row.push_back(oa.theta().at_node(k, 0));
    }
    if (consumption) {
      for (double c : eq.consumption_at_node(k)) row.push_back(c);
      for (const auto& oa : one_agent) row.push_back(oa.consumption_at_node(k));
    }
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

inline void check_dataset(const FigureDataset& ds) {
  if (ds.columns.empty() || ds.columns.front() != "t") {
    throw DomainError("dataset must start with a t column");
  }
  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    if (ds.rows[r].size() != ds.columns.size()) throw DimensionMismatch("ragged dataset row");
    for (double v : ds.rows[r]) {
      if (!std::isfinite(v)) throw DomainError("dataset contains a non-finite value");
    }
    if (r > 0 && !(ds.rows[r][0] > ds.rows[r - 1][0])) {
      throw DomainError("dataset t column must be strictly increasing");
    }
  }
}

inline std::string render_csv(const FigureDataset& ds) {
  std::string out;
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    if (c) out += ',';
    out += ds.columns[c];
  }
  out += '\n';
  for (const auto& row : ds.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_real(row[c]);
    }
    out += '\n';
  }
  return out;
}

inline FigureDataset parse_csv(const std::string& text) {
  FigureDataset ds;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) return ds;
  ds.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(std::stod(cell));
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline void emit_csv(const FigureDataset& ds, const std::filesystem::path& path) {
  check_dataset(ds);
  write_file_atomic(path, render_csv(ds));
}

}  // namespace ezcoal
