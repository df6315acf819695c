#pragma once

#include "ergcbf/sim.hpp"

namespace ergcbf {

/// The 2-DOF arm / circular obstacle setup shipped as scenarios/paper_2dof.cfg.
///
/// The straight joint-space segment from q(0) to the target passes through
/// the obstacle region, so the governor has to route the reference around it.
/// Targets on the far side of the diagonal obstacle band are avoided: the
/// projected flow stops on the band's boundary there.
inline Scenario flagship_scenario() {
  VectorXd lengths(2), masses(2);
  lengths << 1.0, 0.8;
  masses << 2.0, 1.0;
  const MatrixXd I = MatrixXd::Identity(2, 2);

  ArmCollision collision;
  collision.obstacle.center = Vector2d(1.4, 0.0);
  collision.obstacle.radius = 0.30;
  collision.points_per_link = 5;
  collision.beta = 100.0;

  DsmConfig dsm;
  dsm.beta_delta = 100.0;
  dsm.stability_margin_enabled = false;

  Scenario sc{SafetyProblem{ArmModel(lengths, masses, 50.0 * I, 3.0 * I), collision, dsm, BarrierConfig{100.0, 3.0}},
              {}, {}, {}, 1e-3, 20.0, false, std::nullopt};
  sc.governor.attraction_gain = 15.0 * I;
  sc.governor.target = (VectorXd(2) << 0.3, -2.1).finished();
  sc.initial_state = {(VectorXd(2) << 1.2, 0.3).finished(), VectorXd::Zero(2)};
  sc.initial_reference = sc.initial_state.q;
  sc.dt = 1e-3;
  sc.duration = 20.0;
  sc.sampling_box = SamplingBox{(VectorXd(2) << 0.9, -1.0).finished(), (VectorXd(2) << 1.8, 1.2).finished()};
  return sc;
}

}  // namespace ergcbf
