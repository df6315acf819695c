#include <cmath>

#include <gtest/gtest.h>

#include "ergcbf/sim.hpp"
#include "support.hpp"

using namespace ergcbf;
using ergcbf::testing::flagship;
using ergcbf::testing::vec;

namespace {

Scenario short_flagship(double duration) {
  Scenario sc = flagship();
  sc.duration = duration;
  return sc;
}

TrajectoryRecord record(double t, double h, double dist, double v, const VectorXd& g) {
  TrajectoryRecord r;
  r.t = t;
  r.q = r.qdot = r.rho = VectorXd::Zero(2);
  r.g = g;
  r.h_value = h;
  r.min_distance = dist;
  r.lyapunov = v;
  r.grad_g_norm = 1.0;
  return r;
}

TrajectoryLog clean_log() {
  TrajectoryLog log;
  for (int k = 0; k <= 10; ++k) log.records.push_back(record(0.1 * k, 0.5, 1.0, 1.0 - 0.05 * k, vec({0, 0})));
  return log;
}

AuditThresholds thresholds() {
  AuditThresholds th;
  th.obstacle_radius = 0.3;
  return th;
}

bool rows_equal(const BatchRow& a, const BatchRow& b) {
  return a.initial_q == b.initial_q && a.status == b.status && a.converged == b.converged &&
         a.final_reference_error == b.final_reference_error && a.final_state_error == b.final_state_error &&
         a.min_h == b.min_h && a.min_distance == b.min_distance && a.collision == b.collision;
}

}  // namespace

TEST(StepCount, ExactForDecimalSteps) {
  EXPECT_EQ(step_count(20.0, 1e-3), 20000);
  EXPECT_EQ(step_count(1.0, 0.1), 10);
  EXPECT_EQ(step_count(0.3, 0.1), 3);
  EXPECT_EQ(step_count(1.0, 1e-3 / 64), 64000);
}

TEST(ValidateScenario, FlagshipIsValid) { EXPECT_NO_THROW(validate_scenario(flagship())); }

TEST(ValidateScenario, NamesOffendingKey) {
  Scenario sc = flagship();
  sc.dt = 0.0;
  try {
    validate_scenario(sc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "dt");
  }
  sc = flagship();
  sc.initial_state = {vec({0, 0}), vec({0, 0})};
  sc.initial_reference = vec({0, 0});
  try {
    validate_scenario(sc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "initial_q");
  }
  sc = flagship();
  sc.governor.target = vec({1, 2, 3});
  EXPECT_THROW(validate_scenario(sc), ConfigError);
}

TEST(Rk4, FixedPointStaysPut) {
  Scenario sc = flagship();
  sc.problem.collision.obstacle.center = Vector2d(50, 50);
  const VectorXd r = sc.governor.target;
  AugmentedState s{equilibrium(r, sc.problem.model), r};
  for (int k = 0; k < 100; ++k) s = rk4_step(s, 1e-3, sc);
  EXPECT_TRUE(s.x.q == r);
  EXPECT_TRUE(s.x.qdot.isZero(0.0));
  EXPECT_TRUE(s.g == r);
}

TEST(Rk4, InactiveConstraintFollowsNominalFlow) {
  Scenario sc = flagship();
  sc.problem.collision.obstacle.center = Vector2d(50, 50);
  sc.duration = 2.0;
  const TrajectoryLog log = run_scenario(sc);
  ASSERT_FALSE(log.error);
  const VectorXd e0 = sc.initial_reference - sc.governor.target;
  for (const auto& rec : log.records) {
    // P = 15 I, so g(t) - r = exp(-15 t) (g0 - r)
    const VectorXd expected = sc.governor.target + std::exp(-15.0 * rec.t) * e0;
    ASSERT_LE((rec.g - expected).norm(), 1e-9) << "t = " << rec.t;
  }
  sc.duration = 20.0;
  const auto last = run_scenario(sc).records.back();
  EXPECT_LE((last.q - sc.governor.target).norm(), 1e-3);
}

TEST(Rk4, StageEvaluationCounts) {
  Scenario sc = short_flagship(0.1);
  const std::int64_t steps = step_count(sc.duration, sc.dt);
  EXPECT_EQ(run_scenario(sc).stage_stats.evaluations, 4 * steps + steps + 1);
  sc.hold_reference_rate = true;
  EXPECT_EQ(run_scenario(sc).stage_stats.evaluations, steps + steps + 1);
}

TEST(RunScenario, Deterministic) {
  const Scenario sc = short_flagship(2.0);
  const TrajectoryLog a = run_scenario(sc), b = run_scenario(sc);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_TRUE(a.records[k].q == b.records[k].q);
    EXPECT_TRUE(a.records[k].g == b.records[k].g);
    EXPECT_EQ(a.records[k].h_value, b.records[k].h_value);
  }
}

TEST(RunScenario, FlagshipIsSafeAndConverges) {
  const Scenario& sc = flagship();
  const TrajectoryLog log = run_scenario(sc);
  ASSERT_FALSE(log.error) << *log.error;
  EXPECT_EQ(log.records.size(), 20001u);
  double min_h = 1e300, min_d = 1e300;
  for (const auto& r : log.records) {
    min_h = std::min(min_h, r.h_value);
    min_d = std::min(min_d, r.min_distance);
  }
  EXPECT_GE(min_h, -1e-6);
  EXPECT_GE(min_d, sc.problem.collision.obstacle.radius);
  EXPECT_LE((log.records.back().g - sc.governor.target).norm(), 1e-2);
  EXPECT_LE((log.records.back().q - sc.governor.target).norm(), 1e-2);
  AuditThresholds th = thresholds();
  EXPECT_TRUE(invariant_audit(log, th).passed());
}

TEST(RunScenario, StepSizeRobustness) {
  for (double dt : {5e-4, 2.5e-4}) {
    Scenario sc = flagship();
    sc.dt = dt;
    const TrajectoryLog log = run_scenario(sc);
    ASSERT_FALSE(log.error) << "dt = " << dt;
    const BatchRow row = summarize_run(sc, log, 1e-2);
    EXPECT_TRUE(row.ok()) << "dt = " << dt;
    EXPECT_GE(row.min_h, -1e-6);
  }
}

TEST(RunScenario, BreachReturnsPartialLog) {
  Scenario sc = flagship();
  sc.dt = 0.01;  // too coarse for the stiff start
  const TrajectoryLog log = run_scenario(sc);
  ASSERT_TRUE(log.error.has_value());
  EXPECT_TRUE(log.safety_breach);
  EXPECT_FALSE(log.records.empty());
  EXPECT_LT(log.records.size(), static_cast<std::size_t>(step_count(sc.duration, sc.dt) + 1));
}

TEST(Batch, EmptyListGivesEmptySummary) {
  const BatchSummary s = batch_run(flagship(), {});
  EXPECT_TRUE(s.rows.empty());
  EXPECT_EQ(s.converged_count(), 0u);
}

TEST(Batch, DuplicatesAndParallelAreDeterministic) {
  Scenario sc = short_flagship(1.0);
  const std::vector<VectorXd> init{vec({1.2, 0.3}), vec({1.2, 0.3}), vec({1.5, -0.2})};
  BatchOptions serial;
  serial.parallel = false;
  const BatchSummary a = batch_run(sc, init, serial);
  const BatchSummary b = batch_run(sc, init);
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_TRUE(rows_equal(a.rows[0], a.rows[1]));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(rows_equal(a.rows[k], b.rows[k]));
}

TEST(Batch, InfeasibleStartIsRecorded) {
  const BatchSummary s = batch_run(short_flagship(0.1), {vec({0.0, 0.0})});
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows[0].status, RunStatus::infeasible_initial);
  EXPECT_FALSE(s.all_ok());
}

TEST(Sampling, SeededSafeAndInsideBox) {
  const Scenario& sc = flagship();
  const auto a = sample_initial_configurations(sc, 20, 7);
  const auto b = sample_initial_configurations(sc, 20, 7);
  const auto c = sample_initial_configurations(sc, 20, 8);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(a[k] == b[k]);
    EXPECT_TRUE((a[k].array() >= sc.sampling_box->lower.array()).all());
    EXPECT_TRUE((a[k].array() <= sc.sampling_box->upper.array()).all());
    EXPECT_GE(evaluate_barrier(equilibrium(a[k], sc.problem.model), a[k], sc.problem).h_value, 0.0);
  }
  EXPECT_FALSE(a[0] == c[0]);
  Scenario nobox = sc;
  nobox.sampling_box.reset();
  EXPECT_THROW(sample_initial_configurations(nobox, 1, 7), ConfigError);
}

TEST(Audit, CleanLogPasses) {
  const AuditReport rep = invariant_audit(clean_log(), thresholds());
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.records, 11u);
}

TEST(Audit, ForgedBarrierDipFailsWithTimestamp) {
  TrajectoryLog log = clean_log();
  log.records[5].h_value = -0.1;
  log.records[7].h_value = -0.2;
  const AuditReport rep = invariant_audit(log, thresholds());
  ASSERT_FALSE(rep.passed());
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_EQ(rep.failures[0].check, "barrier_nonnegative");
  EXPECT_DOUBLE_EQ(rep.failures[0].t, 0.5);
  EXPECT_EQ(rep.failures[0].value, -0.1);
  EXPECT_EQ(rep.min_h, -0.2);
}

TEST(Audit, EachCheckCanFail) {
  TrajectoryLog log = clean_log();
  log.records[2].min_distance = 0.29;
  log.records[3].feasibility_slack = -1e-6;
  log.records[4].projection_residual = 1e-6;
  log.records[6].lyapunov = log.records[5].lyapunov + 1e-6;
  const AuditReport rep = invariant_audit(log, thresholds());
  std::vector<std::string> checks;
  for (const auto& f : rep.failures) checks.push_back(f.check);
  EXPECT_EQ(checks, (std::vector<std::string>{"collision_free", "feasibility_slack", "projection_residual",
                                              "lyapunov_monotone"}));
  EXPECT_EQ(rep.lyapunov_violations, 1u);
}

TEST(Audit, MovingReferenceMayRaiseLyapunov) {
  TrajectoryLog log = clean_log();
  log.records[6].lyapunov = log.records[5].lyapunov + 1.0;
  log.records[6].g = vec({0.1, 0.0});
  EXPECT_TRUE(invariant_audit(log, thresholds()).passed());
}

TEST(Audit, StageStatisticsAreChecked) {
  TrajectoryLog log = clean_log();
  log.stage_stats.evaluations = 1;
  log.stage_stats.min_feasibility_slack = 0.0;
  log.stage_stats.max_projection_residual = 1e-3;
  const AuditReport rep = invariant_audit(log, thresholds());
  ASSERT_EQ(rep.failures.size(), 1u);
  EXPECT_EQ(rep.failures[0].check, "stage_projection_residual");
}

TEST(Audit, EmptyLogIsVacuousPassWithWarning) {
  const AuditReport rep = invariant_audit(TrajectoryLog{}, thresholds());
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.warnings.size(), 1u);
}

TEST(Audit, RunErrorFails) {
  TrajectoryLog log = clean_log();
  log.error = "safety breach";
  EXPECT_FALSE(invariant_audit(log, thresholds()).passed());
}
