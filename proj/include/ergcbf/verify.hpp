#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ergcbf/governor.hpp"

// Randomized property checks comparing the analytic routes against
// finite-difference and KKT oracles. Used by `ergcbf verify` and the
// acceptance suite.

namespace ergcbf::verify {

/// Deliberate corruption of one analytic quantity, used to prove the harness can fail.
enum class Fault { none, softmin_weights, jacobian, skew_symmetry, barrier_gradient, projection };

inline Fault parse_fault(const std::string& s) {
  if (s.empty() || s == "none") return Fault::none;
  if (s == "softmin_weights") return Fault::softmin_weights;
  if (s == "jacobian") return Fault::jacobian;
  if (s == "skew_symmetry") return Fault::skew_symmetry;
  if (s == "barrier_gradient") return Fault::barrier_gradient;
  if (s == "projection") return Fault::projection;
  throw ContractViolation("unknown fault '" + s + "'");
}

struct PropertyResult {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  double worst = 0.0;      ///< largest observed error metric (or smallest margin, see `threshold`)
  double threshold = 0.0;

  bool ok() const { return failed == 0 && passed > 0; }
  void record(bool pass, double metric) {
    pass ? ++passed : ++failed;
    worst = std::max(worst, metric);
  }
};

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const VectorXd& analytic, const VectorXd& reference) {
  const double scale = std::max(analytic.norm(), reference.norm());
  if (scale <= 1e-14) return 0.0;
  return (analytic - reference).norm() / scale;
}

/// Central finite-difference gradient of a scalar function.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6) {
  VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    grad[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return grad;
}

struct Tolerances {
  double softmin_exact = 1e-12;
  double softmin_gradient_rel = 1e-6;
  double gradient_rel = 1e-5;
  double jacobian_abs = 1e-7;
  double skew_abs = 1e-9;
  double x_gradient_abs = 1e-7;
  double kkt = 1e-10;
  double prop1 = 1e-12;
  double rate_residual = 1e-10;
  double fd_step = 1e-6;
  double kink_exclusion = 1e-4;
  double degenerate_distance = 1e-2;  ///< skip samples with a point this close to the obstacle center
};

/// Random sample of (state, g) around the arm's configuration space.
struct Sample {
  JointState state;
  VectorXd g;
};

class Verifier {
 public:
  Verifier(SafetyProblem problem, std::uint64_t seed, Fault fault = Fault::none, Tolerances tol = {})
      : problem_(std::move(problem)), rng_(seed), fault_(fault), tol_(tol) {}

  const Tolerances& tolerances() const { return tol_; }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  /// g anywhere in [-pi, pi]^n, q within 0.3 rad of g, |qdot| <= 1.
  Sample random_sample() {
    const auto n = problem_.model.dof();
    Sample s;
    s.g = uniform_vector(n, -std::numbers::pi, std::numbers::pi);
    s.state.q = s.g + uniform(0.0, 1.0) * uniform_vector(n, -0.3, 0.3);
    s.state.qdot = uniform(0.0, 1.0) * uniform_vector(n, -1.0, 1.0);
    return s;
  }

  // -------------------------------------------------------------------------

  PropertyResult softmin_bounds(std::size_t samples) {
    PropertyResult r{"softmin_sandwich_and_normalization"};
    r.threshold = tol_.softmin_exact;
    const double betas[] = {1.0, 10.0, 100.0};
    for (std::size_t k = 0; k < samples; ++k) {
      const auto n = static_cast<Eigen::Index>(1 + rng_() % 20);
      const VectorXd s = uniform_vector(n, -10.0, 10.0);
      const double beta = betas[k % 3];
      SoftminResult sm = softmin(s, beta);
      if (fault_ == Fault::softmin_weights) sm.weights[0] *= 1.01;
      const double lo = s.minCoeff() - std::log(static_cast<double>(n)) / beta;
      const double sum_err = std::abs(sm.weights.sum() - 1.0);
      // weights of far-from-minimal entries underflow to zero in double precision
      const bool representable = beta * (s.maxCoeff() - s.minCoeff()) < 700.0;
      const bool ok = sm.value <= s.minCoeff() && sm.value >= lo && sum_err <= tol_.softmin_exact &&
                      (sm.weights.array() >= 0.0).all() && (!representable || (sm.weights.array() > 0.0).all());
      r.record(ok, sum_err);
    }
    // extreme range must stay finite
    VectorXd wide(2);
    wide << -700.0, 700.0;
    for (double beta : betas) {
      const SoftminResult sm = softmin(wide, beta);
      r.record(std::isfinite(sm.value) && sm.weights.allFinite(), 0.0);
    }
    return r;
  }

  PropertyResult softmin_gradient(std::size_t samples) {
    PropertyResult r{"softmin_gradient_fd"};
    r.threshold = tol_.softmin_gradient_rel;
    const double betas[] = {1.0, 10.0, 100.0};
    for (std::size_t k = 0; k < samples; ++k) {
      const auto n = static_cast<Eigen::Index>(1 + rng_() % 20);
      const VectorXd s = uniform_vector(n, -10.0, 10.0);
      const double beta = betas[k % 3];
      VectorXd w = softmin(s, beta).weights;
      if (fault_ == Fault::softmin_weights) w[0] *= 1.01;
      const VectorXd fd = fd_gradient([beta](const VectorXd& x) { return softmin(x, beta).value; }, s, tol_.fd_step);
      const double e = relative_error(w, fd);
      r.record(e <= tol_.softmin_gradient_rel, e);
    }
    return r;
  }

  PropertyResult link_jacobians(std::size_t samples) {
    PropertyResult r{"link_point_jacobians_fd"};
    r.threshold = tol_.gradient_rel;
    const ArmModel& m = problem_.model;
    const int N = problem_.collision.points_per_link;
    for (std::size_t k = 0; k < samples; ++k) {
      const VectorXd q = uniform_vector(m.dof(), -std::numbers::pi, std::numbers::pi);
      auto jacs = link_point_jacobians(q, m, N);
      if (fault_ == Fault::jacobian) jacs.back()(0, 0) += 1e-3;
      bool ok = true;
      double worst = 0.0;
      for (std::size_t p = 0; p < jacs.size(); ++p) {
        for (int c = 0; c < 2; ++c) {
          const VectorXd fd = fd_gradient(
              [&](const VectorXd& x) { return link_points(x, m, N)[p][c]; }, q, tol_.fd_step);
          const VectorXd an = jacs[p].row(c).transpose();
          const double abs_err = (an - fd).cwiseAbs().maxCoeff();
          const double rel = relative_error(an, fd);
          ok = ok && abs_err <= tol_.jacobian_abs && rel <= tol_.gradient_rel;
          worst = std::max(worst, rel);
        }
      }
      r.record(ok, worst);
    }
    return r;
  }

  /// q̇'(Ṁ - 2C)q̇ with Ṁ from a five-point stencil of M along q̇.
  PropertyResult skew_symmetry(std::size_t samples) {
    PropertyResult r{"skew_symmetry"};
    r.threshold = tol_.skew_abs;
    const ArmModel& m = problem_.model;
    for (std::size_t k = 0; k < samples; ++k) {
      const VectorXd q = uniform_vector(m.dof(), -std::numbers::pi, std::numbers::pi);
      const VectorXd qd = uniform_vector(m.dof(), -2.0, 2.0);
      const double h = 1e-4;
      const MatrixXd mdot = (-mass_matrix(q + 2 * h * qd, m) + 8.0 * mass_matrix(q + h * qd, m) -
                             8.0 * mass_matrix(q - h * qd, m) + mass_matrix(q - 2 * h * qd, m)) /
                            (12.0 * h);
      MatrixXd C = coriolis_matrix(q, qd, m);
      if (fault_ == Fault::skew_symmetry) C(0, 0) += 1e-3;
      const double res = std::abs(qd.dot((mdot - 2.0 * C) * qd));
      r.record(res <= tol_.skew_abs, res);
    }
    return r;
  }

  /// d Delta / dX = -dV / dX, both sides by finite differences.
  PropertyResult dsm_x_gradient(std::size_t samples) {
    PropertyResult r{"dsm_x_gradient_identity"};
    r.threshold = tol_.x_gradient_abs;
    const ArmModel& m = problem_.model;
    const auto n = m.dof();
    for (std::size_t k = 0; k < samples; ++k) {
      const Sample s = random_sample();
      if (degenerate(s.g)) {
        ++r.skipped;
        continue;
      }
      VectorXd x(2 * n);
      x << s.state.q, s.state.qdot;
      auto split = [n](const VectorXd& v) { return JointState{v.head(n), v.tail(n)}; };
      const VectorXd d_delta = fd_gradient(
          [&](const VectorXd& v) { return dsm_arm(split(v), s.g, m, problem_.collision, problem_.dsm).value; }, x,
          tol_.fd_step);
      const VectorXd d_v = fd_gradient([&](const VectorXd& v) { return lyapunov(split(v), s.g, m); }, x, tol_.fd_step);
      const double err = (d_delta + d_v).cwiseAbs().maxCoeff();
      r.record(err <= tol_.x_gradient_abs, err);
    }
    return r;
  }

  PropertyResult soft_distance_gradient(std::size_t samples) {
    return g_gradient_check("soft_arm_distance_gradient_fd", samples, false,
                            [this](const VectorXd& g) {
                              const SoftDistance d = soft_arm_distance(g, problem_.model, problem_.collision);
                              return ValueGrad{d.value, d.grad};
                            });
  }

  PropertyResult threshold_gradient(std::size_t samples) {
    return g_gradient_check("gamma_star_gradient_fd", samples, true, [this](const VectorXd& g) {
      const SafetyThreshold t = dsm_threshold(g, problem_.model, problem_.collision);
      return ValueGrad{t.gamma_star, t.grad_g};
    });
  }

  PropertyResult dsm_gradient(std::size_t samples) {
    PropertyResult r{"dsm_arm_gradient_fd"};
    r.threshold = tol_.gradient_rel;
    for (std::size_t k = 0; k < samples; ++k) {
      const Sample s = random_sample();
      if (degenerate(s.g) || near_kink(s.g)) {
        ++r.skipped;
        continue;
      }
      const ValueGrad an = dsm_arm(s.state, s.g, problem_.model, problem_.collision, problem_.dsm);
      const VectorXd fd = fd_gradient(
          [&](const VectorXd& g) { return dsm_arm(s.state, g, problem_.model, problem_.collision, problem_.dsm).value; },
          s.g, tol_.fd_step);
      const double e = relative_error(an.grad, fd);
      r.record(e <= tol_.gradient_rel, e);
    }
    return r;
  }

  PropertyResult barrier_gradient(std::size_t samples) {
    PropertyResult r{"barrier_gradient_fd"};
    r.threshold = tol_.gradient_rel;
    for (std::size_t k = 0; k < samples; ++k) {
      const Sample s = random_sample();
      if (degenerate(s.g) || near_kink(s.g)) {
        ++r.skipped;
        continue;
      }
      VectorXd an = evaluate_barrier(s.state, s.g, problem_).grad_g;
      if (fault_ == Fault::barrier_gradient) an *= 1.001;
      const VectorXd fd = fd_gradient(
          [&](const VectorXd& g) { return evaluate_barrier(s.state, g, problem_).h_value; }, s.g, tol_.fd_step);
      const double e = relative_error(an, fd);
      r.record(e <= tol_.gradient_rel, e);
    }
    return r;
  }

  /// Halfspace projection against a KKT certificate, plus bitwise idempotence on feasible input.
  PropertyResult projection_kkt(std::size_t samples) {
    PropertyResult r{"projection_kkt_oracle"};
    r.threshold = tol_.kkt;
    for (std::size_t k = 0; k < samples; ++k) {
      const auto n = static_cast<Eigen::Index>(2 + rng_() % 4);
      const VectorXd v = uniform_vector(n, -5.0, 5.0);
      const VectorXd a = uniform_vector(n, -2.0, 2.0);
      const double b = (k % 5 == 0) ? 0.0 : uniform(0.0, 3.0);
      VectorXd p = project_halfspace(v, a, b);
      if (fault_ == Fault::projection) p *= 1.001;
      const double err = kkt_violation(v, a, b, p);
      bool ok = err <= tol_.kkt;

      // a strictly feasible point comes back bitwise unchanged
      const VectorXd inside = v - ((std::max(0.0, a.dot(v) - b) + uniform(0.0, 1.0)) / a.squaredNorm()) * a;
      if (a.dot(inside) <= b) {
        const VectorXd again = project_halfspace(inside, a, b);
        ok = ok && (again.array() == inside.array()).all();
      }
      r.record(ok, err);
    }
    return r;
  }

  /// b_H >= 0 whenever H >= 0 (rho = 0 is always admissible). Draws until `samples` safe pairs are found.
  PropertyResult trivial_update_feasible(std::size_t samples) {
    PropertyResult r{"trivial_update_feasible"};
    r.threshold = tol_.prop1;
    for_safe_samples(samples, r, [&](const Sample&, const BarrierEvaluation& ev) {
      const double b = cbf_coefficients(ev, problem_.barrier).b;
      r.record(b >= -tol_.prop1, std::max(0.0, -b));
    });
    return r;
  }

  /// grad V_g' rho* + ||rho*||^2 <= 0 at random safe points with random targets.
  PropertyResult reference_rate_residual(std::size_t samples) {
    PropertyResult r{"reference_rate_residual"};
    r.threshold = tol_.rate_residual;
    const auto n = problem_.model.dof();
    for_safe_samples(samples, r, [&](const Sample& s, const BarrierEvaluation&) {
      GovernorConfig gov{uniform(1.0, 30.0) * MatrixXd::Identity(n, n),
                         uniform_vector(n, -std::numbers::pi, std::numbers::pi)};
      const ReferenceRate rr = reference_rate(s.state, s.g, problem_, gov);
      r.record(rr.projection_residual <= tol_.rate_residual && rr.feasibility_slack >= -tol_.kkt,
               std::max(0.0, rr.projection_residual));
    });
    return r;
  }

  /// Every property at `samples` draws each.
  std::vector<PropertyResult> run_all(std::size_t samples) {
    return {softmin_bounds(samples),         softmin_gradient(samples),   link_jacobians(samples),
            skew_symmetry(samples),          dsm_x_gradient(samples),     soft_distance_gradient(samples),
            threshold_gradient(samples),     dsm_gradient(samples),       barrier_gradient(samples),
            projection_kkt(samples),         trivial_update_feasible(samples), reference_rate_residual(samples)};
  }

  /// Largest violation of the projection optimality conditions for p = proj(v).
  static double kkt_violation(const VectorXd& v, const VectorXd& a, double b, const VectorXd& p) {
    const double scale = std::max({1.0, v.norm(), std::abs(b)});
    double err = std::max(0.0, a.dot(p) - b) / scale;  // primal feasibility
    const VectorXd step = p - v;
    if (step.norm() <= 1e-14 * scale) {
      // interior (or zero-normal) case: v itself must be feasible
      if (a.squaredNorm() > 1e-18) err = std::max(err, std::max(0.0, a.dot(v) - b) / scale);
      return err;
    }
    // boundary case: active constraint and p - v = -lambda a with lambda >= 0
    const double lambda = -step.dot(a) / a.squaredNorm();
    err = std::max(err, std::abs(a.dot(p) - b) / scale);
    err = std::max(err, (step + lambda * a).norm() / scale);
    if (lambda < 0.0) err = std::max(err, -lambda);
    return err;
  }

 private:
  bool degenerate(const VectorXd& g) const {
    const auto d = point_distances(g, problem_.model, problem_.collision);
    return *std::min_element(d.begin(), d.end()) < tol_.degenerate_distance;
  }

  bool near_kink(const VectorXd& g) const {
    const double d = soft_arm_distance(g, problem_.model, problem_.collision).value;
    return std::abs(d - problem_.collision.obstacle.radius) < tol_.kink_exclusion;
  }

  PropertyResult g_gradient_check(const char* name, std::size_t samples, bool exclude_kink,
                                  const std::function<ValueGrad(const VectorXd&)>& f) {
    PropertyResult r{name};
    r.threshold = tol_.gradient_rel;
    const auto n = problem_.model.dof();
    for (std::size_t k = 0; k < samples; ++k) {
      const VectorXd g = uniform_vector(n, -std::numbers::pi, std::numbers::pi);
      if (degenerate(g) || (exclude_kink && near_kink(g))) {
        ++r.skipped;
        continue;
      }
      const VectorXd fd = fd_gradient([&f](const VectorXd& x) { return f(x).value; }, g, tol_.fd_step);
      const double e = relative_error(f(g).grad, fd);
      r.record(e <= tol_.gradient_rel, e);
    }
    return r;
  }

  template <typename Fn>
  void for_safe_samples(std::size_t samples, PropertyResult& r, Fn&& fn) {
    std::size_t found = 0;
    for (std::size_t attempt = 0; found < samples && attempt < 1000 * samples; ++attempt) {
      const Sample s = random_sample();
      if (degenerate(s.g)) continue;
      const BarrierEvaluation ev = evaluate_barrier(s.state, s.g, problem_);
      if (ev.h_value < 0.0) continue;
      ++found;
      fn(s, ev);
    }
    r.skipped = samples - found;
    if (found < samples) ++r.failed;  // could not draw enough safe samples
  }

  SafetyProblem problem_;
  std::mt19937_64 rng_;
  Fault fault_;
  Tolerances tol_;
};

}  // namespace ergcbf::verify
