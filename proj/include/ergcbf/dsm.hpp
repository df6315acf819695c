#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ergcbf/plant.hpp"
#include "ergcbf/smoothmin.hpp"

namespace ergcbf {

/// Smoothing of the two candidate margins m1 (constraint) and m2 (stability).
///
/// The stability margin m2 = (1 - epsilon) * gamma_bar - V is only needed when
/// V is valid on a restricted region; gamma_bar is user supplied because no
/// closed form exists for it in general.
struct DsmConfig {
  double beta_delta = 100.0;
  double epsilon = 0.05;
  bool stability_margin_enabled = false;
  std::optional<double> gamma_bar;

  void validate() const {
    detail::require(beta_delta > 0.0 && std::isfinite(beta_delta), "DsmConfig: beta_delta must be positive");
    detail::require(epsilon > 0.0 && epsilon < 1.0, "DsmConfig: epsilon must lie in (0, 1)");
    if (stability_margin_enabled)
      detail::require(gamma_bar.has_value() && *gamma_bar >= 0.0,
                      "DsmConfig: stability margin enabled but gamma_bar missing");
  }
};

/// Whole-arm vs. circular obstacle collision constraint, sampled at
/// points_per_link points on every link and aggregated with softmin(beta).
struct ArmCollision {
  Obstacle obstacle;
  int points_per_link = 5;
  double beta = 100.0;

  void validate() const {
    obstacle.validate();
    detail::require(points_per_link >= 1, "ArmCollision: points_per_link must be >= 1");
    detail::require(beta > 0.0 && std::isfinite(beta), "ArmCollision: beta must be positive");
  }
};

struct SafetyThreshold {
  double gamma_star = 0.0;
  VectorXd grad_g;
};

/// Scalar function value together with its gradient in the reference g.
struct ValueGrad {
  double value = 0.0;
  VectorXd grad;
};

struct SoftDistance {
  double value = 0.0;
  VectorXd grad;
  double min_distance = 0.0;  ///< exact minimum over the sampled points
};

/// softmin_{beta_delta}{m1, m2}, or m1 exactly when m2 is absent.
inline double dsm_composite(double m1, std::optional<double> m2, const DsmConfig& config) {
  if (config.stability_margin_enabled)
    detail::require(m2.has_value(), "dsm_composite: stability margin enabled but m2 missing");
  if (!m2) return m1;
  return softmin({m1, *m2}, config.beta_delta).value;
}

/// Euclidean distance from each sampled arm point to the obstacle center.
inline std::vector<double> point_distances(const VectorXd& q, const ArmModel& model, const ArmCollision& col) {
  const auto pts = link_points(q, model, col.points_per_link);
  std::vector<double> d;
  d.reserve(pts.size());
  for (const auto& p : pts) d.push_back((p - col.obstacle.center).norm());
  return d;
}

/// Smoothed minimum distance between the sampled arm points and the obstacle
/// center, with its gradient in the joint angles.
inline SoftDistance soft_arm_distance(const VectorXd& q, const ArmModel& model, const ArmCollision& col) {
  const auto pts = link_points(q, model, col.points_per_link);
  const auto jacs = link_point_jacobians(q, model, col.points_per_link);
  std::vector<double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d[i] = (pts[i] - col.obstacle.center).norm();
    if (d[i] <= 1e-9) throw DegenerateGeometry("soft_arm_distance: sampled arm point coincides with obstacle center");
  }
  const SoftminResult sm = softmin(std::span<const double>(d), col.beta);

  SoftDistance out;
  out.value = sm.value;
  out.min_distance = *std::min_element(d.begin(), d.end());
  out.grad = VectorXd::Zero(model.dof());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vector2d unit = (pts[i] - col.obstacle.center) / d[i];
    out.grad.noalias() += sm.weights[static_cast<Eigen::Index>(i)] * (jacs[i].transpose() * unit);
  }
  return out;
}

/// h_arm(g) = d~(g) - R, evaluated at the equilibrium configuration q = g.
inline ValueGrad steady_state_constraint(const VectorXd& g, const ArmModel& model, const ArmCollision& col) {
  SoftDistance d = soft_arm_distance(g, model, col);
  return {d.value - col.obstacle.radius, std::move(d.grad)};
}

namespace detail {
// Gamma* = lambda_min(Kp) / (2 L^2) * max(0, d~ - R)^2 from an already evaluated soft distance.
inline SafetyThreshold threshold_from_distance(const SoftDistance& d, const ArmModel& model, double radius) {
  const double L2 = model.lipschitz() * model.lipschitz();
  const double slack = std::max(0.0, d.value - radius);
  SafetyThreshold t;
  t.gamma_star = model.kp_min_eigenvalue() / (2.0 * L2) * slack * slack;
  // squared hinge is C^1; its derivative at the kink is zero
  t.grad_g = (model.kp_min_eigenvalue() / L2) * slack * d.grad;
  return t;
}
}  // namespace detail

inline SafetyThreshold dsm_threshold(const VectorXd& g, const ArmModel& model, const ArmCollision& col) {
  return detail::threshold_from_distance(soft_arm_distance(g, model, col), model, col.obstacle.radius);
}

namespace detail {
// Delta and its g-gradient given Gamma*(g). dV/dg = -Kp (q - g).
inline ValueGrad dsm_from_threshold(const SafetyThreshold& t, const JointState& state, const VectorXd& g,
                                    const ArmModel& model, const DsmConfig& config) {
  const double V = lyapunov(state, g, model);
  const VectorXd grad_v_neg = model.kp() * (state.q - g);  // = -dV/dg
  const double m1 = t.gamma_star - V;
  const VectorXd grad_m1 = t.grad_g + grad_v_neg;
  if (!config.stability_margin_enabled) return {m1, grad_m1};

  // gamma_bar is a constant here, so dm2/dg = -dV/dg.
  const double m2 = (1.0 - config.epsilon) * *config.gamma_bar - V;
  const SoftminResult sm = softmin({m1, m2}, config.beta_delta);
  return {sm.value, sm.weights[0] * grad_m1 + sm.weights[1] * grad_v_neg};
}
}  // namespace detail

/// Delta_arm(X, g) = Gamma*(g) - V(X, g), with gradient in g.
/// When the config enables the stability margin, the m1/m2 softmin is used instead.
inline ValueGrad dsm_arm(const JointState& state, const VectorXd& g, const ArmModel& model, const ArmCollision& col,
                         const DsmConfig& config = {}) {
  return detail::dsm_from_threshold(dsm_threshold(g, model, col), state, g, model, config);
}

}  // namespace ergcbf
