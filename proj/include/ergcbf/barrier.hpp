#pragma once

#include <cmath>

#include "ergcbf/dsm.hpp"

namespace ergcbf {

/// Aggregation parameter beta_H and the linear class-K gain alpha_H(s) = alpha_gain * s.
struct BarrierConfig {
  double beta_h = 100.0;
  double alpha_gain = 3.0;

  void validate() const {
    detail::require(beta_h > 0.0 && std::isfinite(beta_h), "BarrierConfig: beta_h must be positive");
    detail::require(alpha_gain > 0.0 && std::isfinite(alpha_gain), "BarrierConfig: alpha_gain must be positive");
  }
};

/// Everything that defines the safe set for one arm/obstacle pair.
struct SafetyProblem {
  ArmModel model;
  ArmCollision collision;
  DsmConfig dsm;
  BarrierConfig barrier;

  void validate() const {
    collision.validate();
    dsm.validate();
    barrier.validate();
  }
};

/// H(x, g) and the quantities the governor needs at one (x, g).
///
/// The aggregated terms are the transient-safety margin Delta_arm (one entry in
/// weights_dsm) and the steady-state constraint h_arm(x_g, g) (one entry in
/// weights_ss).
struct BarrierEvaluation {
  double h_value = 0.0;
  VectorXd weights_dsm;
  VectorXd weights_ss;
  VectorXd grad_g;
  double flow_term = 0.0;  ///< grad_x H' f(x, kappa(x, g))

  // per-term diagnostics
  double delta_arm = 0.0;
  double h_arm = 0.0;
  VectorXd grad_delta_arm;
  VectorXd grad_h_arm;
};

/// Affine constraint a' rho <= b on the reference rate.
struct CbfCoefficients {
  VectorXd a;
  double b = 0.0;
};

inline BarrierEvaluation evaluate_barrier(const JointState& state, const VectorXd& g, const SafetyProblem& problem) {
  const ArmModel& model = problem.model;
  detail::require(state.q.allFinite() && state.qdot.allFinite() && g.allFinite(), "evaluate_barrier: non-finite input");
  detail::require_size(state.q, model.dof(), "evaluate_barrier");
  detail::require_size(state.qdot, model.dof(), "evaluate_barrier");
  detail::require_size(g, model.dof(), "evaluate_barrier");

  // h_arm depends on g only through x_g = (g, 0): its x-gradient vanishes.
  const SoftDistance dist = soft_arm_distance(g, model, problem.collision);
  const SafetyThreshold thr = detail::threshold_from_distance(dist, model, problem.collision.obstacle.radius);
  const ValueGrad delta = detail::dsm_from_threshold(thr, state, g, model, problem.dsm);
  const double h_arm = dist.value - problem.collision.obstacle.radius;

  const SoftminResult sm = softmin({delta.value, h_arm}, problem.barrier.beta_h);

  BarrierEvaluation ev;
  ev.h_value = sm.value;
  ev.weights_dsm = sm.weights.head(1);
  ev.weights_ss = sm.weights.tail(1);
  ev.grad_g = sm.weights[0] * delta.grad + sm.weights[1] * dist.grad;
  // grad_x Delta = -grad_x V, and -Vdot = qdot' Kd qdot along the closed loop
  ev.flow_term = sm.weights[0] * -lyapunov_rate(state, model);
  ev.delta_arm = delta.value;
  ev.h_arm = h_arm;
  ev.grad_delta_arm = delta.grad;
  ev.grad_h_arm = dist.grad;
  return ev;
}

/// a_H = -grad_g H,  b_H = grad_x H' f + alpha_H(H).
inline CbfCoefficients cbf_coefficients(const BarrierEvaluation& ev, const BarrierConfig& config) {
  return {-ev.grad_g, ev.flow_term + config.alpha_gain * ev.h_value};
}

}  // namespace ergcbf
