#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ergcbf/sim.hpp"

namespace ergcbf {

// ---------------------------------------------------------------------------
// Scenario files
//
// Flat `key = value` lines. `#` starts a comment. Arrays are written as
// `[a, b, c]`; square gain matrices take either n entries (diagonal) or n*n
// entries (row-major). Booleans are `true`/`false`.

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "lengths", "masses", "kp", "kd",
      "obstacle_center", "obstacle_radius", "points_per_link", "distance_beta",
      "beta_h", "alpha_gain", "beta_delta", "epsilon", "stability_margin_enabled", "gamma_bar",
      "attraction_gain", "target",
      "initial_q", "initial_qdot", "initial_reference",
      "dt", "duration", "hold_reference_rate",
      "sample_q_min", "sample_q_max"};
  return keys;
}

inline bool is_known_key(const std::string& k) {
  const auto& keys = known_keys();
  return std::find(keys.begin(), keys.end(), k) != keys.end();
}

// Splits "key = value" (also accepts "key=value"); throws ConfigError on malformed input.
inline std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError(trim(line), where + ": expected key = value, got '" + trim(line) + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError("", where + ": missing key");
  if (!is_known_key(key)) throw ConfigError(key, where + ": unknown key '" + key + "'");
  if (value.empty()) throw ConfigError(key, where + ": empty value for '" + key + "'");
  return {std::move(key), std::move(value)};
}

inline double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, key + ": '" + t + "' is not a number");
  }
  if (used != t.size() || !std::isfinite(v)) throw ConfigError(key, key + ": '" + t + "' is not a finite number");
  return v;
}

inline std::vector<double> parse_array(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']') throw ConfigError(key, key + ": expected [a, b, ...]");
  t = t.substr(1, t.size() - 2);
  std::vector<double> out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) throw ConfigError(key, key + ": empty array element");
    out.push_back(parse_real(key, item));
  }
  if (out.empty()) throw ConfigError(key, key + ": empty array");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key, key + ": expected true or false");
}

inline VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

class ConfigReader {
 public:
  explicit ConfigReader(const ConfigMap& m) : map_(m) {}

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  const std::string& raw(const std::string& key) const {
    const auto it = map_.find(key);
    if (it == map_.end()) throw ConfigError(key, "missing required key '" + key + "'");
    return it->second;
  }
  double real(const std::string& key) const { return parse_real(key, raw(key)); }
  double real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }
  bool flag(const std::string& key, bool fallback) const { return has(key) ? parse_bool(key, raw(key)) : fallback; }

  int positive_int(const std::string& key) const {
    const double v = real(key);
    if (v < 1.0 || v != std::floor(v) || v > 1e6) throw ConfigError(key, key + ": expected a positive integer");
    return static_cast<int>(v);
  }

  VectorXd vector(const std::string& key, Eigen::Index n = -1) const {
    const auto v = parse_array(key, raw(key));
    if (n >= 0 && static_cast<Eigen::Index>(v.size()) != n)
      throw ConfigError(key, key + ": expected " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    return to_vector(v);
  }

  MatrixXd square(const std::string& key, Eigen::Index n) const {
    const auto v = parse_array(key, raw(key));
    const auto count = static_cast<Eigen::Index>(v.size());
    if (count == n) return to_vector(v).asDiagonal();
    if (count == n * n) {
      MatrixXd m(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v[static_cast<std::size_t>(i * n + j)];
      return m;
    }
    throw ConfigError(key, key + ": expected " + std::to_string(n) + " (diagonal) or " + std::to_string(n * n) +
                               " (row-major) values");
  }

 private:
  const ConfigMap& map_;
};

}  // namespace detail

/// Parses scenario text into raw key/value pairs. Duplicate keys are rejected.
inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    auto [key, value] = detail::split_assignment(line, "line " + std::to_string(lineno));
    if (out.count(key)) throw ConfigError(key, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out.emplace(std::move(key), std::move(value));
  }
  return out;
}

/// Applies `key=value` overrides on top of a parsed config.
inline void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto [key, value] = detail::split_assignment(o, "override '" + o + "'");
    config[key] = value;
  }
}

/// Builds and validates a Scenario. Throws ConfigError naming the offending key.
inline Scenario scenario_from_config(const ConfigMap& config) {
  const detail::ConfigReader rd(config);
  const VectorXd lengths = rd.vector("lengths");
  const auto n = lengths.size();
  const VectorXd masses = rd.vector("masses", n);
  const MatrixXd kp = rd.square("kp", n);
  const MatrixXd kd = rd.square("kd", n);

  auto model = [&]() {
    try {
      return ArmModel(lengths, masses, kp, kd);
    } catch (const ContractViolation& e) {
      throw ConfigError("lengths", e.what());
    }
  }();

  ArmCollision collision;
  collision.obstacle.center = rd.vector("obstacle_center", 2);
  collision.obstacle.radius = rd.real("obstacle_radius");
  if (!(collision.obstacle.radius > 0.0)) throw ConfigError("obstacle_radius", "obstacle_radius: must be positive");
  collision.points_per_link = rd.positive_int("points_per_link");
  collision.beta = rd.real("distance_beta");
  if (!(collision.beta > 0.0)) throw ConfigError("distance_beta", "distance_beta: must be positive");

  DsmConfig dsm;
  dsm.beta_delta = rd.real("beta_delta", dsm.beta_delta);
  dsm.epsilon = rd.real("epsilon", dsm.epsilon);
  dsm.stability_margin_enabled = rd.flag("stability_margin_enabled", false);
  if (rd.has("gamma_bar")) dsm.gamma_bar = rd.real("gamma_bar");
  if (!(dsm.beta_delta > 0.0)) throw ConfigError("beta_delta", "beta_delta: must be positive");
  if (!(dsm.epsilon > 0.0 && dsm.epsilon < 1.0)) throw ConfigError("epsilon", "epsilon: must lie in (0, 1)");
  if (dsm.stability_margin_enabled && !dsm.gamma_bar)
    throw ConfigError("gamma_bar", "gamma_bar: required when stability_margin_enabled = true");

  BarrierConfig barrier;
  barrier.beta_h = rd.real("beta_h");
  barrier.alpha_gain = rd.real("alpha_gain");
  if (!(barrier.beta_h > 0.0)) throw ConfigError("beta_h", "beta_h: must be positive");
  if (!(barrier.alpha_gain > 0.0)) throw ConfigError("alpha_gain", "alpha_gain: must be positive");

  Scenario sc{SafetyProblem{std::move(model), collision, dsm, barrier}, {}, {}, {}, 1e-3, 20.0, false, std::nullopt};
  sc.governor.attraction_gain = rd.square("attraction_gain", n);
  sc.governor.target = rd.vector("target", n);
  sc.initial_state.q = rd.vector("initial_q", n);
  sc.initial_state.qdot = rd.has("initial_qdot") ? rd.vector("initial_qdot", n) : VectorXd::Zero(n);
  sc.initial_reference = rd.has("initial_reference") ? rd.vector("initial_reference", n) : sc.initial_state.q;
  sc.dt = rd.real("dt", 1e-3);
  sc.duration = rd.real("duration", 20.0);
  sc.hold_reference_rate = rd.flag("hold_reference_rate", false);
  if (rd.has("sample_q_min") || rd.has("sample_q_max"))
    sc.sampling_box = SamplingBox{rd.vector("sample_q_min", n), rd.vector("sample_q_max", n)};

  validate_scenario(sc);
  return sc;
}

/// Resolves a scenario path; a missing extension falls back to `<path>.cfg`.
inline std::filesystem::path resolve_scenario_path(const std::filesystem::path& p) {
  if (std::filesystem::is_regular_file(p)) return p;
  std::filesystem::path with_ext = p;
  with_ext += ".cfg";
  if (std::filesystem::is_regular_file(with_ext)) return with_ext;
  throw ConfigError("scenario", "scenario file not found: " + p.string());
}

inline ConfigMap load_config(const std::filesystem::path& p) {
  const auto path = resolve_scenario_path(p);
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario", "cannot open scenario file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline Scenario load_scenario(const std::filesystem::path& p, const std::vector<std::string>& overrides = {}) {
  ConfigMap cfg = load_config(p);
  apply_overrides(cfg, overrides);
  return scenario_from_config(cfg);
}

// ---------------------------------------------------------------------------
// Output

/// Shortest round-trip-safe decimal form used by every CSV column (%.17g).
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log, int n) {
  auto group = [&os, n](const char* prefix) {
    for (int i = 1; i <= n; ++i) os << ',' << prefix << i;
  };
  os << 't';
  group("q");
  group("qd");
  group("g");
  group("rho");
  os << ",H,delta_arm,h_arm,V,min_dist,feas_slack,proj_residual,grad_g_H_norm\n";
  for (const auto& r : log.records) {
    os << format_real(r.t);
    for (const VectorXd* v : {&r.q, &r.qdot, &r.g, &r.rho})
      for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << format_real((*v)[i]);
    for (double v : {r.h_value, r.delta_arm, r.h_arm, r.lyapunov, r.min_distance, r.feasibility_slack,
                     r.projection_residual, r.grad_g_norm})
      os << ',' << format_real(v);
    os << '\n';
  }
}

inline void write_batch_csv(std::ostream& os, const BatchSummary& summary, int n) {
  os << "run";
  for (int i = 1; i <= n; ++i) os << ",q0_" << i;
  os << ",status,converged,final_g_error,final_q_error,min_H,min_dist,collision,max_proj_residual,"
        "min_feas_slack\n";
  for (std::size_t k = 0; k < summary.rows.size(); ++k) {
    const auto& r = summary.rows[k];
    os << k;
    for (Eigen::Index i = 0; i < r.initial_q.size(); ++i) os << ',' << format_real(r.initial_q[i]);
    os << ',' << to_string(r.status) << ',' << (r.converged ? 1 : 0) << ',' << format_real(r.final_reference_error)
       << ',' << format_real(r.final_state_error) << ',' << format_real(r.min_h) << ','
       << format_real(r.min_distance) << ',' << (r.collision ? 1 : 0) << ','
       << format_real(r.stage_stats.max_projection_residual) << ','
       << format_real(r.stage_stats.min_feasibility_slack) << '\n';
  }
}

/// Structured `key: value` text report. Thresholds and overrides are echoed in the header.
inline void write_audit_report(std::ostream& os, const AuditReport& rep, const AuditThresholds& th,
                               const std::vector<std::string>& overrides = {}) {
  os << "# invariant audit\n";
  for (const auto& o : overrides) os << "override: " << o << '\n';
  os << "threshold.min_h: " << format_real(th.min_h) << '\n'
     << "threshold.min_feasibility_slack: " << format_real(th.min_feasibility_slack) << '\n'
     << "threshold.max_projection_residual: " << format_real(th.max_projection_residual) << '\n'
     << "threshold.obstacle_radius: " << format_real(th.obstacle_radius) << '\n'
     << "threshold.lyapunov_increase: " << format_real(th.lyapunov_increase) << '\n'
     << "records: " << rep.records << '\n'
     << "min_h: " << format_real(rep.min_h) << '\n'
     << "min_feasibility_slack: " << format_real(rep.min_feasibility_slack) << '\n'
     << "max_projection_residual: " << format_real(rep.max_projection_residual) << '\n'
     << "min_distance: " << format_real(rep.min_distance) << '\n'
     << "min_grad_g_norm: " << format_real(rep.min_grad_g_norm) << '\n'
     << "lyapunov_violations: " << rep.lyapunov_violations << '\n';
  if (rep.run_error) os << "run_error: " << *rep.run_error << '\n';
  for (const auto& f : rep.failures)
    os << "failure: " << f.check << " at t=" << format_real(f.t) << " value=" << format_real(f.value) << '\n';
  for (const auto& w : rep.warnings) os << "warning: " << w << '\n';
  os << "result: " << (rep.passed() ? "PASS" : "FAIL") << '\n';
}

}  // namespace ergcbf
