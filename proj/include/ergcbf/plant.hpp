#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ergcbf/errors.hpp"

namespace ergcbf {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;
using PointJacobian = Eigen::Matrix<double, 2, Eigen::Dynamic>;

/// Manipulator state X = [q; qdot].
struct JointState {
  VectorXd q;
  VectorXd qdot;
};

struct Obstacle {
  Vector2d center = Vector2d::Zero();
  double radius = 0.0;

  void validate() const {
    detail::require(center.allFinite(), "obstacle center must be finite");
    detail::require(radius > 0.0 && std::isfinite(radius), "obstacle radius must be positive");
  }
};

/// Planar serial arm with a joint-space PD prestabilizer.
///
/// Masses are point masses located at the distal joint of each link. The
/// smallest eigenvalue of Kp and the kinematic Lipschitz bound are computed
/// once at construction; the model is immutable afterwards.
class ArmModel {
 public:
  ArmModel(VectorXd lengths, VectorXd masses, MatrixXd kp, MatrixXd kd)
      : lengths_(std::move(lengths)), masses_(std::move(masses)), kp_(std::move(kp)), kd_(std::move(kd)) {
    const auto n = lengths_.size();
    detail::require(n > 0, "ArmModel: at least one link required");
    detail::require(masses_.size() == n, "ArmModel: masses/lengths size mismatch");
    detail::require((lengths_.array() > 0.0).all() && lengths_.allFinite(), "ArmModel: link lengths must be positive");
    detail::require((masses_.array() > 0.0).all() && masses_.allFinite(), "ArmModel: masses must be positive");
    kp_min_eig_ = check_spd(kp_, n, "Kp");
    check_spd(kd_, n, "Kd");

    // L_max = sqrt(sum_m (sum_{i>=m} l_i)^2)
    double acc = 0.0;
    double tail = 0.0;
    for (Eigen::Index m = n - 1; m >= 0; --m) {
      tail += lengths_[m];
      acc += tail * tail;
    }
    lipschitz_ = std::sqrt(acc);
  }

  int dof() const { return static_cast<int>(lengths_.size()); }
  const VectorXd& lengths() const { return lengths_; }
  const VectorXd& masses() const { return masses_; }
  const MatrixXd& kp() const { return kp_; }
  const MatrixXd& kd() const { return kd_; }
  double kp_min_eigenvalue() const { return kp_min_eig_; }
  double lipschitz() const { return lipschitz_; }

 private:
  static double check_spd(const MatrixXd& m, Eigen::Index n, const char* name) {
    if (m.rows() != n || m.cols() != n) throw ContractViolation(std::string("ArmModel: ") + name + " has wrong shape");
    if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ContractViolation(std::string("ArmModel: ") + name + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > 0.0)) throw ContractViolation(std::string("ArmModel: ") + name + " must be positive definite");
    return lo;
  }

  VectorXd lengths_;
  VectorXd masses_;
  MatrixXd kp_;
  MatrixXd kd_;
  double kp_min_eig_ = 0.0;
  double lipschitz_ = 0.0;
};

namespace detail {
inline void require_two_link(const ArmModel& model) {
  if (model.dof() != 2) throw UnsupportedModel("closed-form dynamics are implemented for 2-DOF arms only");
}
inline void require_size(const VectorXd& v, int n, const char* what) {
  if (v.size() != n) throw ContractViolation(std::string(what) + ": dimension mismatch");
}
}  // namespace detail

inline MatrixXd mass_matrix(const VectorXd& q, const ArmModel& model) {
  detail::require_two_link(model);
  detail::require_size(q, 2, "mass_matrix");
  const double l1 = model.lengths()[0], l2 = model.lengths()[1];
  const double m1 = model.masses()[0], m2 = model.masses()[1];
  const double c2 = std::cos(q[1]);
  MatrixXd M(2, 2);
  M(0, 0) = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
  M(0, 1) = m2 * (l2 * l2 + l1 * l2 * c2);
  M(1, 0) = M(0, 1);
  M(1, 1) = m2 * l2 * l2;
  return M;
}

/// Christoffel-symbol Coriolis matrix; Mdot - 2C is skew-symmetric.
inline MatrixXd coriolis_matrix(const VectorXd& q, const VectorXd& qdot, const ArmModel& model) {
  detail::require_two_link(model);
  detail::require_size(q, 2, "coriolis_matrix");
  detail::require_size(qdot, 2, "coriolis_matrix");
  const double l1 = model.lengths()[0], l2 = model.lengths()[1];
  const double h = -model.masses()[1] * l1 * l2 * std::sin(q[1]);
  MatrixXd C(2, 2);
  C(0, 0) = h * qdot[1];
  C(0, 1) = h * (qdot[0] + qdot[1]);
  C(1, 0) = -h * qdot[0];
  C(1, 1) = 0.0;
  return C;
}

inline VectorXd pd_torque(const JointState& state, const VectorXd& g, const ArmModel& model) {
  const int n = model.dof();
  detail::require_size(state.q, n, "pd_torque");
  detail::require_size(state.qdot, n, "pd_torque");
  detail::require_size(g, n, "pd_torque");
  return -model.kp() * (state.q - g) - model.kd() * state.qdot;
}

/// Closed-loop vector field: returns (qdot, qddot) packed as a JointState.
inline JointState state_derivative(const JointState& state, const VectorXd& g, const ArmModel& model) {
  const VectorXd tau = pd_torque(state, g, model);
  const MatrixXd M = mass_matrix(state.q, model);
  const MatrixXd C = coriolis_matrix(state.q, state.qdot, model);
  Eigen::LLT<MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw NumericalSingularity("state_derivative: mass matrix not positive definite");
  return {state.qdot, llt.solve(tau - C * state.qdot)};
}

/// Closed-loop equilibrium for a constant reference: x_g = (g, 0).
inline JointState equilibrium(const VectorXd& g, const ArmModel& model) {
  detail::require_size(g, model.dof(), "equilibrium");
  return {g, VectorXd::Zero(g.size())};
}

/// Joint positions P_0 (base, at the origin) through P_n (tip).
inline std::vector<Vector2d> forward_kinematics(const VectorXd& q, const ArmModel& model) {
  const int n = model.dof();
  detail::require_size(q, n, "forward_kinematics");
  std::vector<Vector2d> joints;
  joints.reserve(static_cast<std::size_t>(n) + 1);
  joints.emplace_back(Vector2d::Zero());
  double angle = 0.0;
  for (int k = 0; k < n; ++k) {
    angle += q[k];
    joints.push_back(joints.back() + model.lengths()[k] * Vector2d(std::cos(angle), std::sin(angle)));
  }
  return joints;
}

/// Points p_{k,j} = P_{k-1} + (j/N)(P_k - P_{k-1}), j = 1..N, ordered link by link.
inline std::vector<Vector2d> link_points(const VectorXd& q, const ArmModel& model, int points_per_link) {
  detail::require(points_per_link >= 1, "link_points: points_per_link must be >= 1");
  const auto joints = forward_kinematics(q, model);
  std::vector<Vector2d> pts;
  pts.reserve(static_cast<std::size_t>(model.dof() * points_per_link));
  for (int k = 1; k <= model.dof(); ++k) {
    for (int j = 1; j <= points_per_link; ++j) {
      const double s = static_cast<double>(j) / points_per_link;
      pts.push_back(joints[k - 1] + s * (joints[k] - joints[k - 1]));
    }
  }
  return pts;
}

/// d p_{k,j} / dq for every sampled point, same ordering as link_points.
/// Column i is the perpendicular of (p - P_{i-1}) for joints i <= k, zero otherwise.
inline std::vector<PointJacobian> link_point_jacobians(const VectorXd& q, const ArmModel& model,
                                                       int points_per_link) {
  detail::require(points_per_link >= 1, "link_point_jacobians: points_per_link must be >= 1");
  const int n = model.dof();
  const auto joints = forward_kinematics(q, model);
  std::vector<PointJacobian> jacs;
  jacs.reserve(static_cast<std::size_t>(n * points_per_link));
  for (int k = 1; k <= n; ++k) {
    for (int j = 1; j <= points_per_link; ++j) {
      const double s = static_cast<double>(j) / points_per_link;
      const Vector2d p = joints[k - 1] + s * (joints[k] - joints[k - 1]);
      PointJacobian J = PointJacobian::Zero(2, n);
      for (int i = 1; i <= k; ++i) {
        const Vector2d r = p - joints[i - 1];
        J(0, i - 1) = -r.y();
        J(1, i - 1) = r.x();
      }
      jacs.push_back(std::move(J));
    }
  }
  return jacs;
}

/// V(X, g) = 1/2 qdot' M(q) qdot + 1/2 (q - g)' Kp (q - g).
inline double lyapunov(const JointState& state, const VectorXd& g, const ArmModel& model) {
  const VectorXd e = state.q - g;
  const MatrixXd M = mass_matrix(state.q, model);
  return 0.5 * state.qdot.dot(M * state.qdot) + 0.5 * e.dot(model.kp() * e);
}

/// dV/dt along the closed loop for constant g. Exact by skew-symmetry of Mdot - 2C.
inline double lyapunov_rate(const JointState& state, const ArmModel& model) {
  detail::require_size(state.qdot, model.dof(), "lyapunov_rate");
  return -state.qdot.dot(model.kd() * state.qdot);
}

inline double lipschitz_bound(const ArmModel& model) { return model.lipschitz(); }

}  // namespace ergcbf
