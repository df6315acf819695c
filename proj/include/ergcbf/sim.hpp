#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ergcbf/governor.hpp"

namespace ergcbf {

/// Axis-aligned joint-angle box used to draw initial configurations for batch runs.
struct SamplingBox {
  VectorXd lower;
  VectorXd upper;
};

struct Scenario {
  SafetyProblem problem;
  GovernorConfig governor;
  JointState initial_state;
  VectorXd initial_reference;
  double dt = 1e-3;
  double duration = 20.0;
  bool hold_reference_rate = false;  ///< evaluate rho* once per step (ZOH) instead of at every RK stage
  std::optional<SamplingBox> sampling_box;
};

/// Number of integration steps; the log holds steps + 1 records.
inline std::int64_t step_count(double duration, double dt) {
  return static_cast<std::int64_t>(std::floor(duration / dt * (1.0 + 1e-12)));
}

/// Checks every Scenario invariant, including H >= 0 at the initial (state, reference).
/// Throws ConfigError naming the offending field.
inline void validate_scenario(const Scenario& s) {
  const int n = s.problem.model.dof();
  auto check = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ConfigError(key, std::string(key) + ": " + msg);
  };
  try {
    s.problem.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("problem", e.what());
  }
  try {
    s.governor.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("attraction_gain", e.what());
  }
  check(s.governor.target.size() == n, "target", "dimension must match the number of links");
  check(s.initial_state.q.size() == n && s.initial_state.q.allFinite(), "initial_q", "must hold n finite values");
  check(s.initial_state.qdot.size() == n && s.initial_state.qdot.allFinite(), "initial_qdot",
        "must hold n finite values");
  check(s.initial_reference.size() == n && s.initial_reference.allFinite(), "initial_reference",
        "must hold n finite values");
  check(s.dt > 0.0 && std::isfinite(s.dt), "dt", "must be positive");
  check(s.duration >= s.dt && std::isfinite(s.duration), "duration", "must be at least dt");
  if (s.sampling_box) {
    check(s.sampling_box->lower.size() == n && s.sampling_box->upper.size() == n &&
              (s.sampling_box->lower.array() <= s.sampling_box->upper.array()).all(),
          "sample_q_min", "sampling box must have n ordered bounds");
  }
  double h = 0.0;
  try {
    h = evaluate_barrier(s.initial_state, s.initial_reference, s.problem).h_value;
  } catch (const std::exception& e) {
    throw ConfigError("initial_q", std::string("initial_q: cannot evaluate barrier: ") + e.what());
  }
  check(h >= 0.0, "initial_q", "initial configuration is outside the safe set (H = " + std::to_string(h) + ")");
}

struct AugmentedState {
  JointState x;
  VectorXd g;
};

enum class ReferenceMode {
  governor,  ///< g follows rho*(x, g)
  constant,  ///< g frozen, plain PD regulation
};

/// Extremes over every governor evaluation, including intermediate RK stages.
struct StageStats {
  std::int64_t evaluations = 0;
  double min_h = std::numeric_limits<double>::infinity();
  double min_feasibility_slack = std::numeric_limits<double>::infinity();
  double max_projection_residual = -std::numeric_limits<double>::infinity();

  void add(const ReferenceRate& rr) {
    ++evaluations;
    min_h = std::min(min_h, rr.barrier.h_value);
    min_feasibility_slack = std::min(min_feasibility_slack, rr.feasibility_slack);
    max_projection_residual = std::max(max_projection_residual, rr.projection_residual);
  }
};

namespace detail {
struct AugmentedRate {
  VectorXd qdot, qddot, gdot;
};

inline AugmentedRate augmented_rate(const AugmentedState& s, const Scenario& sc, ReferenceMode mode,
                                    const VectorXd* held_rho, StageStats* stats) {
  const JointState d = state_derivative(s.x, s.g, sc.problem.model);
  AugmentedRate r{d.q, d.qdot, VectorXd::Zero(s.g.size())};
  if (mode == ReferenceMode::governor) {
    if (held_rho) {
      r.gdot = *held_rho;
    } else {
      const ReferenceRate rr = reference_rate(s.x, s.g, sc.problem, sc.governor);
      if (stats) stats->add(rr);
      r.gdot = rr.rho;
    }
  }
  return r;
}

inline AugmentedState advance(const AugmentedState& s, const AugmentedRate& r, double h) {
  return {{s.x.q + h * r.qdot, s.x.qdot + h * r.qddot}, s.g + h * r.gdot};
}
}  // namespace detail

/// One classical RK4 step of the augmented system xdot = f(x, kappa(x, g)), gdot = rho*(x, g).
/// rho* is re-evaluated at every stage unless the scenario holds it per step.
inline AugmentedState rk4_step(const AugmentedState& s, double dt, const Scenario& sc,
                               ReferenceMode mode = ReferenceMode::governor, StageStats* stats = nullptr) {
  detail::require(dt > 0.0, "rk4_step: dt must be positive");
  std::optional<VectorXd> held;
  if (mode == ReferenceMode::governor && sc.hold_reference_rate) {
    const ReferenceRate rr = reference_rate(s.x, s.g, sc.problem, sc.governor);
    if (stats) stats->add(rr);
    held = rr.rho;
  }
  const VectorXd* hp = held ? &*held : nullptr;
  const auto k1 = detail::augmented_rate(s, sc, mode, hp, stats);
  const auto k2 = detail::augmented_rate(detail::advance(s, k1, 0.5 * dt), sc, mode, hp, stats);
  const auto k3 = detail::augmented_rate(detail::advance(s, k2, 0.5 * dt), sc, mode, hp, stats);
  const auto k4 = detail::augmented_rate(detail::advance(s, k3, dt), sc, mode, hp, stats);
  const double w = dt / 6.0;
  AugmentedState out;
  out.x.q = s.x.q + w * (k1.qdot + 2.0 * k2.qdot + 2.0 * k3.qdot + k4.qdot);
  out.x.qdot = s.x.qdot + w * (k1.qddot + 2.0 * k2.qddot + 2.0 * k3.qddot + k4.qddot);
  out.g = s.g + w * (k1.gdot + 2.0 * k2.gdot + 2.0 * k3.gdot + k4.gdot);
  return out;
}

struct TrajectoryRecord {
  double t = 0.0;
  VectorXd q, qdot, g, rho;
  double h_value = 0.0;
  double delta_arm = 0.0;
  double h_arm = 0.0;
  double lyapunov = 0.0;
  double min_distance = 0.0;  ///< exact min over sampled points at the current q
  double feasibility_slack = 0.0;
  double projection_residual = 0.0;
  double grad_g_norm = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
  StageStats stage_stats;
  std::optional<std::string> error;  ///< set when the run halted early
  bool safety_breach = false;
};

inline double min_point_distance(const VectorXd& q, const ArmModel& model, const ArmCollision& col) {
  const auto d = point_distances(q, model, col);
  return *std::min_element(d.begin(), d.end());
}

namespace detail {
inline TrajectoryRecord make_record(double t, const AugmentedState& s, const Scenario& sc, ReferenceMode mode,
                                    StageStats* stats) {
  TrajectoryRecord rec;
  rec.t = t;
  rec.q = s.x.q;
  rec.qdot = s.x.qdot;
  rec.g = s.g;
  rec.lyapunov = lyapunov(s.x, s.g, sc.problem.model);
  rec.min_distance = min_point_distance(s.x.q, sc.problem.model, sc.problem.collision);
  if (mode == ReferenceMode::governor) {
    const ReferenceRate rr = reference_rate(s.x, s.g, sc.problem, sc.governor);
    if (stats) stats->add(rr);
    rec.rho = rr.rho;
    rec.h_value = rr.barrier.h_value;
    rec.delta_arm = rr.barrier.delta_arm;
    rec.h_arm = rr.barrier.h_arm;
    rec.feasibility_slack = rr.feasibility_slack;
    rec.projection_residual = rr.projection_residual;
    rec.grad_g_norm = rr.barrier.grad_g.norm();
  } else {
    const BarrierEvaluation ev = evaluate_barrier(s.x, s.g, sc.problem);
    rec.rho = VectorXd::Zero(s.g.size());
    rec.h_value = ev.h_value;
    rec.delta_arm = ev.delta_arm;
    rec.h_arm = ev.h_arm;
    const CbfCoefficients c = cbf_coefficients(ev, sc.problem.barrier);
    rec.feasibility_slack = c.b;
    rec.projection_residual = 0.0;
    rec.grad_g_norm = ev.grad_g.norm();
  }
  return rec;
}
}  // namespace detail

/// Integrates the scenario for its full duration, logging every step.
/// A safety breach (or any numerical failure) stops the run; the partial log is
/// returned with `error` set.
inline TrajectoryLog run_scenario(const Scenario& sc, ReferenceMode mode = ReferenceMode::governor) {
  TrajectoryLog log;
  const std::int64_t steps = step_count(sc.duration, sc.dt);
  log.records.reserve(static_cast<std::size_t>(steps) + 1);
  AugmentedState s{sc.initial_state, sc.initial_reference};
  try {
    for (std::int64_t k = 0;; ++k) {
      log.records.push_back(detail::make_record(static_cast<double>(k) * sc.dt, s, sc, mode, &log.stage_stats));
      if (k == steps) break;
      s = rk4_step(s, sc.dt, sc, mode, &log.stage_stats);
    }
  } catch (const SafetyBreach& e) {
    log.safety_breach = true;
    log.error = e.what();
  } catch (const std::exception& e) {
    log.error = e.what();
  }
  return log;
}

/// Integrates without logging and returns the final augmented state.
inline AugmentedState integrate(const Scenario& sc, double t_end, double dt,
                                ReferenceMode mode = ReferenceMode::governor) {
  AugmentedState s{sc.initial_state, sc.initial_reference};
  const std::int64_t steps = step_count(t_end, dt);
  for (std::int64_t k = 0; k < steps; ++k) s = rk4_step(s, dt, sc, mode);
  return s;
}

// ---------------------------------------------------------------------------
// Batch runs

enum class RunStatus { completed, safety_breach, failed, infeasible_initial };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::safety_breach: return "safety_breach";
    case RunStatus::failed: return "failed";
    case RunStatus::infeasible_initial: return "infeasible_initial";
  }
  return "unknown";
}

struct BatchRow {
  VectorXd initial_q;
  RunStatus status = RunStatus::completed;
  bool converged = false;
  double final_reference_error = std::numeric_limits<double>::quiet_NaN();  ///< ||g(T) - r||
  double final_state_error = std::numeric_limits<double>::quiet_NaN();      ///< ||q(T) - r||
  double min_h = std::numeric_limits<double>::quiet_NaN();
  double min_distance = std::numeric_limits<double>::quiet_NaN();
  bool collision = false;
  StageStats stage_stats;
  std::string message;

  bool ok() const { return status == RunStatus::completed && converged && !collision; }
};

struct BatchSummary {
  std::vector<BatchRow> rows;

  std::size_t converged_count() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const BatchRow& r) { return r.converged; }));
  }
  std::size_t collision_count() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const BatchRow& r) { return r.collision; }));
  }
  bool all_ok() const {
    return std::all_of(rows.begin(), rows.end(), [](const BatchRow& r) { return r.ok(); });
  }
};

struct BatchOptions {
  double convergence_tolerance = 1e-2;
  bool parallel = true;
};

/// Summarizes one finished run. Collision is judged on the exact sampled-point distances.
inline BatchRow summarize_run(const Scenario& sc, const TrajectoryLog& log, double convergence_tolerance) {
  BatchRow row;
  row.initial_q = sc.initial_state.q;
  row.stage_stats = log.stage_stats;
  if (log.records.empty()) {
    row.status = log.safety_breach ? RunStatus::safety_breach : RunStatus::failed;
    row.message = log.error.value_or("empty log");
    return row;
  }
  row.min_h = std::numeric_limits<double>::infinity();
  row.min_distance = std::numeric_limits<double>::infinity();
  for (const auto& r : log.records) {
    row.min_h = std::min(row.min_h, r.h_value);
    row.min_distance = std::min(row.min_distance, r.min_distance);
  }
  row.collision = row.min_distance < sc.problem.collision.obstacle.radius;
  const auto& last = log.records.back();
  row.final_reference_error = (last.g - sc.governor.target).norm();
  row.final_state_error = (last.q - sc.governor.target).norm();
  if (log.error) {
    row.status = log.safety_breach ? RunStatus::safety_breach : RunStatus::failed;
    row.message = *log.error;
  }
  row.converged = row.status == RunStatus::completed && row.final_reference_error <= convergence_tolerance &&
                  row.final_state_error <= convergence_tolerance;
  return row;
}

/// Runs the template scenario once per initial configuration (qdot = 0, g = q).
/// Rows come back in input order; per-run failures are recorded, never thrown.
inline BatchSummary batch_run(const Scenario& tmpl, const std::vector<VectorXd>& initial_configs,
                              const BatchOptions& options = {}) {
  auto one = [&tmpl, &options](const VectorXd& q0) -> BatchRow {
    Scenario sc = tmpl;
    sc.initial_state = {q0, VectorXd::Zero(q0.size())};
    sc.initial_reference = q0;
    try {
      validate_scenario(sc);
    } catch (const std::exception& e) {
      BatchRow row;
      row.initial_q = q0;
      row.status = RunStatus::infeasible_initial;
      row.message = e.what();
      return row;
    }
    return summarize_run(sc, run_scenario(sc), options.convergence_tolerance);
  };

  BatchSummary summary;
  summary.rows.reserve(initial_configs.size());
  if (!options.parallel) {
    for (const auto& q0 : initial_configs) summary.rows.push_back(one(q0));
    return summary;
  }
  std::vector<std::future<BatchRow>> jobs;
  jobs.reserve(initial_configs.size());
  for (const auto& q0 : initial_configs) jobs.push_back(std::async(std::launch::async, one, std::cref(q0)));
  for (auto& j : jobs) summary.rows.push_back(j.get());
  return summary;
}

/// Draws `count` joint configurations uniformly from the scenario's sampling box,
/// keeping only those whose equilibrium (q, 0, g = q) satisfies H >= 0.
inline std::vector<VectorXd> sample_initial_configurations(const Scenario& sc, std::size_t count, std::uint64_t seed) {
  if (!sc.sampling_box) throw ConfigError("sample_q_min", "sample_q_min/sample_q_max: sampling box not configured");
  const SamplingBox& box = *sc.sampling_box;
  const int n = sc.problem.model.dof();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<VectorXd> out;
  out.reserve(count);
  const std::size_t max_attempts = 10000 * std::max<std::size_t>(count, 1);
  for (std::size_t attempt = 0; out.size() < count; ++attempt) {
    if (attempt >= max_attempts)
      throw ConfigError("sample_q_min", "sampling box: too few safe configurations found");
    VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
    try {
      if (evaluate_barrier(equilibrium(q, sc.problem.model), q, sc.problem).h_value >= 0.0) out.push_back(q);
    } catch (const DegenerateGeometry&) {
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Invariant audit

struct AuditThresholds {
  double min_h = -1e-6;
  double min_feasibility_slack = -1e-10;
  double max_projection_residual = 1e-10;
  double obstacle_radius = 0.0;        ///< sampled points must stay at distance >= this
  double lyapunov_increase = 1e-8;     ///< allowed V increase per step while g is held
  double constant_reference_step = 1e-9;  ///< ||g_{k+1} - g_k|| below this counts as "g held"
};

struct AuditFailure {
  std::string check;
  double t = 0.0;
  double value = 0.0;
};

struct AuditReport {
  std::size_t records = 0;
  double min_h = std::numeric_limits<double>::infinity();
  double min_feasibility_slack = std::numeric_limits<double>::infinity();
  double max_projection_residual = -std::numeric_limits<double>::infinity();
  double min_distance = std::numeric_limits<double>::infinity();
  double min_grad_g_norm = std::numeric_limits<double>::infinity();
  std::size_t lyapunov_violations = 0;
  std::vector<AuditFailure> failures;  ///< first offending record per check
  std::vector<std::string> warnings;
  std::optional<std::string> run_error;

  bool passed() const { return failures.empty() && !run_error; }
};

/// Checks the logged trajectory against the thresholds. An empty log passes vacuously with a warning.
inline AuditReport invariant_audit(const TrajectoryLog& log, const AuditThresholds& th) {
  AuditReport rep;
  rep.records = log.records.size();
  rep.run_error = log.error;
  if (log.records.empty()) {
    rep.warnings.emplace_back("empty trajectory log: audit is vacuous");
    return rep;
  }
  auto flag = [&rep](const char* check, double t, double v) {
    for (const auto& f : rep.failures)
      if (f.check == check) return;
    rep.failures.push_back({check, t, v});
  };
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& r = log.records[k];
    rep.min_h = std::min(rep.min_h, r.h_value);
    rep.min_feasibility_slack = std::min(rep.min_feasibility_slack, r.feasibility_slack);
    rep.max_projection_residual = std::max(rep.max_projection_residual, r.projection_residual);
    rep.min_distance = std::min(rep.min_distance, r.min_distance);
    rep.min_grad_g_norm = std::min(rep.min_grad_g_norm, r.grad_g_norm);
    if (r.h_value < th.min_h) flag("barrier_nonnegative", r.t, r.h_value);
    if (r.feasibility_slack < th.min_feasibility_slack) flag("feasibility_slack", r.t, r.feasibility_slack);
    if (r.projection_residual > th.max_projection_residual) flag("projection_residual", r.t, r.projection_residual);
    if (r.min_distance < th.obstacle_radius) flag("collision_free", r.t, r.min_distance);
    if (k > 0) {
      const auto& p = log.records[k - 1];
      if ((r.g - p.g).norm() <= th.constant_reference_step && r.lyapunov - p.lyapunov > th.lyapunov_increase) {
        ++rep.lyapunov_violations;
        flag("lyapunov_monotone", r.t, r.lyapunov - p.lyapunov);
      }
    }
  }
  // stage-level extremes cover the intermediate RK evaluations that are not logged
  if (log.stage_stats.evaluations > 0) {
    if (log.stage_stats.min_feasibility_slack < th.min_feasibility_slack)
      flag("stage_feasibility_slack", std::numeric_limits<double>::quiet_NaN(), log.stage_stats.min_feasibility_slack);
    if (log.stage_stats.max_projection_residual > th.max_projection_residual)
      flag("stage_projection_residual", std::numeric_limits<double>::quiet_NaN(),
           log.stage_stats.max_projection_residual);
  }
  if (rep.min_grad_g_norm < 1e-9)
    rep.warnings.emplace_back("grad_g H nearly vanished along the trajectory (regularity not certified)");
  return rep;
}

}  // namespace ergcbf
