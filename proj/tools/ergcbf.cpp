// ergcbf: run, batch and verify the reference governor on the planar arm scenario.
//
// Exit codes: 0 success, 1 audit/verification failure, 2 configuration error,
// 3 safety breach.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ergcbf/flagship.hpp"
#include "ergcbf/io.hpp"
#include "ergcbf/verify.hpp"

namespace fs = std::filesystem;
using namespace ergcbf;

namespace {

enum ExitCode : int { kOk = 0, kAuditFailure = 1, kConfigError = 2, kSafetyBreach = 3 };

// Applies `--threshold name=value` entries to the audit thresholds.
AuditThresholds make_thresholds(const Scenario& sc, const std::vector<std::string>& entries) {
  AuditThresholds th;
  th.obstacle_radius = sc.problem.collision.obstacle.radius;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw ConfigError(e, "threshold '" + e + "': expected name=value");
    const std::string name = e.substr(0, eq);
    const double v = detail::parse_real(name, e.substr(eq + 1));
    if (name == "min_h") th.min_h = v;
    else if (name == "min_feasibility_slack") th.min_feasibility_slack = v;
    else if (name == "max_projection_residual") th.max_projection_residual = v;
    else if (name == "obstacle_radius") th.obstacle_radius = v;
    else if (name == "lyapunov_increase") th.lyapunov_increase = v;
    else throw ConfigError(name, "unknown audit threshold '" + name + "'");
  }
  return th;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

int cmd_run(const std::string& scenario_path, const fs::path& out_dir, const std::vector<std::string>& overrides,
            const std::vector<std::string>& thresholds) {
  const Scenario sc = load_scenario(scenario_path, overrides);
  const AuditThresholds th = make_thresholds(sc, thresholds);

  const auto t0 = std::chrono::steady_clock::now();
  const TrajectoryLog log = run_scenario(sc);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const AuditReport rep = invariant_audit(log, th);

  fs::create_directories(out_dir);
  std::ostringstream csv, report;
  write_trajectory_csv(csv, log, sc.problem.model.dof());
  write_audit_report(report, rep, th, overrides);
  const fs::path csv_path = out_dir / "trajectory.csv";
  const fs::path report_path = out_dir / "audit.txt";
  write_file(csv_path, csv.str());
  write_file(report_path, report.str());

  const auto& last = log.records.back();
  std::cout << "scenario: " << scenario_path << '\n';
  for (const auto& o : overrides) std::cout << "override: " << o << '\n';
  std::cout << "records: " << log.records.size() << "  (" << elapsed << " s)\n"
            << "min H: " << rep.min_h << "  min distance: " << rep.min_distance
            << "  (R = " << sc.problem.collision.obstacle.radius << ")\n"
            << "final |g - r|: " << (last.g - sc.governor.target).norm()
            << "  final |q - r|: " << (last.q - sc.governor.target).norm() << '\n'
            << "wrote " << csv_path.string() << ", " << report_path.string() << '\n'
            << "audit: " << (rep.passed() ? "PASS" : "FAIL") << '\n';
  if (log.safety_breach) {
    std::cerr << "safety breach: " << *log.error << '\n';
    return kSafetyBreach;
  }
  return rep.passed() ? kOk : kAuditFailure;
}

int cmd_batch(const std::string& scenario_path, int count, std::uint64_t seed, const fs::path& out_dir,
              const std::vector<std::string>& overrides, bool serial) {
  if (count < 1) throw ConfigError("count", "--count must be at least 1");
  const Scenario sc = load_scenario(scenario_path, overrides);
  const auto inits = sample_initial_configurations(sc, static_cast<std::size_t>(count), seed);

  BatchOptions opts;
  opts.parallel = !serial;
  const auto t0 = std::chrono::steady_clock::now();
  const BatchSummary summary = batch_run(sc, inits, opts);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(out_dir);
  std::ostringstream csv, report;
  write_batch_csv(csv, summary, sc.problem.model.dof());
  report << "# batch summary\n"
         << "scenario: " << scenario_path << '\n'
         << "seed: " << seed << '\n';
  for (const auto& o : overrides) report << "override: " << o << '\n';
  report << "runs: " << summary.rows.size() << '\n'
         << "converged: " << summary.converged_count() << '\n'
         << "collisions: " << summary.collision_count() << '\n'
         << "result: " << (summary.all_ok() ? "PASS" : "FAIL") << '\n';
  const fs::path csv_path = out_dir / "batch_summary.csv";
  const fs::path report_path = out_dir / "batch_report.txt";
  write_file(csv_path, csv.str());
  write_file(report_path, report.str());

  std::cout << report.str() << "elapsed: " << elapsed << " s\n"
            << "wrote " << csv_path.string() << ", " << report_path.string() << '\n';
  return summary.all_ok() ? kOk : kAuditFailure;
}

int cmd_verify(std::size_t samples, std::uint64_t seed, const std::string& scenario_path, const std::string& fault) {
  if (samples < 1) throw ConfigError("samples", "--samples must be at least 1");
  const Scenario sc = scenario_path.empty() ? flagship_scenario() : load_scenario(scenario_path);
  verify::Verifier v(sc.problem, seed, verify::parse_fault(fault));
  bool all_ok = true;
  for (const auto& r : v.run_all(samples)) {
    all_ok = all_ok && r.ok();
    std::cout << (r.ok() ? "PASS " : "FAIL ") << r.name << "  passed=" << r.passed << " failed=" << r.failed
              << " skipped=" << r.skipped << " worst=" << r.worst << " tol=" << r.threshold << '\n';
  }
  std::cout << "verify: " << (all_ok ? "PASS" : "FAIL") << '\n';
  return all_ok ? kOk : kAuditFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference governor with softmin-aggregated safety margins for a planar arm"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::vector<std::string> thresholds;

  auto* run = app.add_subcommand("run", "simulate one scenario and audit the trajectory");
  run->add_option("scenario", scenario, "scenario file (extension .cfg may be omitted)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--set", overrides, "override a scenario key (key=value), repeatable");
  run->add_option("--threshold", thresholds, "override an audit threshold (name=value), repeatable");

  int count = 20;
  std::uint64_t seed = 7;
  bool serial = false;
  auto* batch = app.add_subcommand("batch", "run from sampled safe initial configurations");
  batch->add_option("scenario", scenario, "scenario file")->required();
  batch->add_option("--count", count, "number of runs");
  batch->add_option("--seed", seed, "sampling seed");
  batch->add_option("--out", out_dir, "output directory");
  batch->add_option("--set", overrides, "override a scenario key (key=value), repeatable");
  batch->add_flag("--serial", serial, "run sequentially instead of in parallel");

  std::size_t samples = 1000;
  std::uint64_t verify_seed = 1;
  std::string verify_scenario;
  std::string fault;
  auto* ver = app.add_subcommand("verify", "randomized gradient/invariant property suite");
  ver->add_option("--samples", samples, "random draws per property");
  ver->add_option("--seed", verify_seed, "random seed");
  ver->add_option("--scenario", verify_scenario, "scenario file (default: built-in 2-DOF setup)");
  ver->add_option("--inject-fault", fault, "corrupt one analytic quantity (harness self-test)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(scenario, out_dir, overrides, thresholds);
    if (*batch) return cmd_batch(scenario, count, seed, out_dir, overrides, serial);
    if (*ver) return cmd_verify(samples, verify_seed, verify_scenario, fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << '\n';
    return kConfigError;
  } catch (const ContractViolation& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAuditFailure;
  }
  return kConfigError;
}
