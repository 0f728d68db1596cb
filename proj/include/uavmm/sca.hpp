#pragma once

#include <Eigen/Core>

#include "uavmm/scenario.hpp"

namespace uavmm {

/// First-order surrogate coefficients of the rate in the squared UAV-user
/// distance, taken at an anchor trajectory: the true rate is concave in the
/// squared distance, so the tangent
///   r >= alpha * (-A (d^2 - d_r^2) + B)
/// is a global under-estimator with equality at the anchor. Pairs with
/// alpha = 0 carry (a, b) = (0, 0) and contribute no constraint terms.
struct ScaCoefficients {
  Eigen::MatrixXd a;  // K x N, 1/m^2 scale, >= 0
  Eigen::MatrixXd b;  // K x N, bps/Hz, >= 0
  Trajectory anchor;
  Eigen::MatrixXd anchor_d2;  // ||q_r[n] - w_k||^2, cached from the anchor
  std::vector<Vec2> users;    // user positions, cached for evaluation
};

ScaCoefficients sca_coefficients(const Scenario& sc, const Allocation& alloc,
                                 const Trajectory& anchor);

// alpha_kn * (-A (||q[n]-w_k||^2 - ||q_r[n]-w_k||^2) + B); exact at the
// anchor, a lower bound everywhere else.
double surrogate_rate(const ScaCoefficients& coeffs, const Allocation& alloc,
                      const Trajectory& traj, int k, int n);

// Largest eta_lb the surrogate constraints admit at a fixed trajectory: the
// minimum over per-user surrogate averages and served-pair surrogate MRR
// ratios.
double surrogate_eta(const Scenario& sc, const ScaCoefficients& coeffs,
                     const Allocation& alloc, const Trajectory& traj,
                     const Eigen::VectorXd& theta_temp);

struct TrajectoryStep {
  Trajectory trajectory;
  double eta_lb = 0.0;
  bool feasible = true;  // false only if the QCQP solve failed outright
};

// One surrogate step: maximize eta_lb over (eta_lb, q[1..N]) subject to the
// surrogate average/MRR constraints, the speed limits, and periodicity
// (q[N] identified with q[1], so the equality holds exactly). Never returns
// a value below the anchor's surrogate eta.
TrajectoryStep solve_trajectory_step(const Scenario& sc, const Allocation& alloc,
                                     const Eigen::VectorXd& theta_temp,
                                     const Trajectory& anchor);

struct ScaResult {
  Trajectory trajectory;
  double eta = 0.0;     // true min-average-throughput at the final trajectory
  double eta_lb = 0.0;  // last surrogate objective
  int iterations = 0;
  bool feasible = true;
};

// Re-anchored surrogate steps until the relative eta_lb gain drops below
// 1e-4 or 30 iterations; eta_lb is non-decreasing across iterations.
ScaResult sca_loop(const Scenario& sc, const Allocation& alloc,
                   const Eigen::VectorXd& theta_temp, const Trajectory& initial);

}  // namespace uavmm
