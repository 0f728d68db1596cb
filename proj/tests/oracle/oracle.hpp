#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>

#include "uavmm/scenario.hpp"

namespace uavmm::oracle {

struct OracleResult {
  double value = 0.0;
  Eigen::VectorXd argument;  // flattened decision vector
  std::string method;        // "grid" | "projected_gradient" | ...
  double tolerance = 0.0;
  bool converged = true;
};

// Globally solves the fixed-trajectory allocation problem: projected
// gradient ascent on a soft-min smoothing with a vanishing temperature
// schedule, then a certified outer-approximation refinement (tangent cuts on
// each concave pair rate; the LP value brackets the optimum from above).
// Formulas are re-derived from first principles; the production solver's
// dual decomposition is not used. Intended for K <= 2, N <= 8. `tolerance`
// reports the relative bracket width.
OracleResult oracle_allocation(const Scenario& sc, const Trajectory& traj,
                               const Eigen::VectorXd& theta);

// Exhaustive grid search over free waypoints (N <= 4) inside the user hull
// plus margin, subject to speed and periodicity; returns the best achieved
// max-min throughput for the fixed allocation.
OracleResult oracle_trajectory(const Scenario& sc, const Allocation& alloc,
                               const Eigen::VectorXd& theta, double grid_step);

// Central differences at h in {1e-4, 1e-5, 1e-6}; returns the smallest
// relative deviation from the supplied analytic directional derivative.
double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& point,
                               const Eigen::VectorXd& direction, double analytic);

}  // namespace uavmm::oracle
