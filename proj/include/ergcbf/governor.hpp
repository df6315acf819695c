#pragma once

#include <cmath>
#include <sstream>

#include "ergcbf/barrier.hpp"

namespace ergcbf {

/// Attraction potential V_g(g, r) = 1/2 (g - r)' P (g - r).
struct GovernorConfig {
  MatrixXd attraction_gain;  ///< P, symmetric positive definite
  VectorXd target;           ///< r

  void validate() const {
    const auto n = target.size();
    detail::require(n > 0 && target.allFinite(), "GovernorConfig: target must be finite and nonempty");
    detail::require(attraction_gain.rows() == n && attraction_gain.cols() == n, "GovernorConfig: P has wrong shape");
    detail::require((attraction_gain - attraction_gain.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                    "GovernorConfig: P must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(attraction_gain, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().minCoeff() > 0.0, "GovernorConfig: P must be positive definite");
  }
};

/// Tolerances used inside the reference update.
struct GovernorTolerances {
  double zero_normal_sq = 1e-18;  ///< ||a||^2 below this takes the unconstrained branch
  double breach = 1e-6;           ///< H >= -breach counts as inside the safe set
  double feasibility = 1e-12;     ///< b >= -feasibility whenever H >= 0
};

struct ReferenceRate {
  VectorXd rho;
  bool constraint_active = false;
  double feasibility_slack = 0.0;   ///< b - a' rho
  double projection_residual = 0.0; ///< grad V_g' rho + ||rho||^2
  BarrierEvaluation barrier;
  CbfCoefficients coefficients;
};

inline double potential(const VectorXd& g, const GovernorConfig& config) {
  const VectorXd e = g - config.target;
  return 0.5 * e.dot(config.attraction_gain * e);
}

inline VectorXd potential_grad(const VectorXd& g, const GovernorConfig& config) {
  return config.attraction_gain * (g - config.target);
}

/// Minimizer of ||rho - v||^2 subject to a' rho <= b.
/// Returns v itself (bitwise) when it is already feasible or when a vanishes.
inline VectorXd project_halfspace(const VectorXd& v, const VectorXd& a, double b, double zero_normal_sq = 1e-18) {
  detail::require(v.size() == a.size(), "project_halfspace: dimension mismatch");
  const double a_sq = a.squaredNorm();
  if (a_sq <= zero_normal_sq) return v;
  const double excess = a.dot(v) - b;
  if (excess <= 0.0) return v;
  return v - (excess / a_sq) * a;
}

/// rho* = argmin ||rho + grad V_g||^2 s.t. a_H' rho <= b_H, with residuals.
///
/// Throws SafetyBreach if (state, g) lies outside {H >= -tol.breach}, and
/// std::logic_error if the trivial update rho = 0 is infeasible while H >= 0.
inline ReferenceRate reference_rate(const JointState& state, const VectorXd& g, const SafetyProblem& problem,
                                    const GovernorConfig& governor, const GovernorTolerances& tol = {}) {
  ReferenceRate out;
  out.barrier = evaluate_barrier(state, g, problem);
  const double H = out.barrier.h_value;
  if (!(H >= -tol.breach)) {
    std::ostringstream msg;
    msg << "safety breach: H = " << H << " below -" << tol.breach << " (delta_arm = " << out.barrier.delta_arm
        << ", h_arm = " << out.barrier.h_arm << ")";
    throw SafetyBreach(msg.str(), H);
  }
  out.coefficients = cbf_coefficients(out.barrier, problem.barrier);
  const VectorXd& a = out.coefficients.a;
  const double b = out.coefficients.b;
  if (H >= 0.0 && b < -tol.feasibility)
    throw std::logic_error("reference_rate: rho = 0 infeasible inside the safe set (b_H < 0)");

  const VectorXd grad_vg = potential_grad(g, governor);
  const VectorXd nominal = -grad_vg;
  out.constraint_active = a.squaredNorm() > tol.zero_normal_sq && a.dot(nominal) > b;
  out.rho = project_halfspace(nominal, a, b, tol.zero_normal_sq);
  out.feasibility_slack = b - a.dot(out.rho);
  out.projection_residual = grad_vg.dot(out.rho) + out.rho.squaredNorm();
  return out;
}

}  // namespace ergcbf
