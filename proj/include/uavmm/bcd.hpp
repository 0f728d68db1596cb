#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "uavmm/allocation.hpp"
#include "uavmm/scenario.hpp"

namespace uavmm {

enum class TrajectoryKind { Proposed, FlyAndHover, Circular, Static };

// "proposed" | "fly_and_hover" | "circular" | "static"
const char* trajectory_kind_name(TrajectoryKind kind);

struct BcdConfig {
  int l_max = 10;                   // annealing steps L_max
  double epsilon = 1e-3;            // relative eta-improvement stop
  int max_outer_iterations = 60;
  // The literal annealing update subtracts (r+1) * theta_step from the
  // current temporary MRRs, an accelerating schedule that reaches the
  // targets well before l_max steps; this flag switches to a constant
  // per-iteration decrement of theta_step instead.
  bool constant_step_annealing = false;
  AllocationConfig allocation;      // forwarded to every allocation solve
};

struct SolveReport {
  std::vector<double> eta_history;  // eta after each allocation solve
  std::vector<Eigen::VectorXd> theta_temp_history;  // before each solve
  Trajectory trajectory;
  Allocation allocation;
  double eta = 0.0;
  double dual_bound = 0.0;
  KktReport kkt;
  int iterations = 0;       // outer iterations performed
  double wall_time = 0.0;   // seconds
  std::string termination;  // "converged" | "iteration_limit"
};

// Circle around the user centroid with radius
// r_ini = (1 - sum(theta)/K) * min{V_max T / (2 pi), r_min / 2},
// r_min = max_k ||w_k - c||; shrunk further if the chord between adjacent
// waypoints would exceed S_max. theta = 1 for all users collapses it to the
// centroid; theta = 0 keeps the full radius.
Trajectory initial_circular_trajectory(const Scenario& sc);

// theta_ini,k = 1 where the target MRR is positive, else 0.
Eigen::VectorXd initial_mrrs(const Eigen::VectorXd& theta_targets);

// Algorithm 2: block coordinate descent alternating the allocation solve
// (against the actual MRR targets) with an SCA trajectory step (against
// temporary MRRs annealed from theta_ini down to the targets). Infeasible
// trajectory steps halve the most recent annealing decrement and retry up
// to 5 times. Once the temporary MRRs reach the targets, eta_history is
// non-decreasing; the report always ends on an allocation solve so the
// final (trajectory, allocation, eta) triple is consistent.
SolveReport run_bcd(const Scenario& sc, const BcdConfig& config = {});

// Static: every waypoint at the user centroid. Circular: the initialization
// circle. Fly-and-hover: nearest-neighbor closed tour over the users flown
// at (N-1)/N of V_max (so sampled hops respect S_max), remaining time split
// into equal hovers above each user; throws ValidationError naming the
// minimum feasible period when T is too short to complete the tour.
Trajectory baseline_trajectory(const Scenario& sc, TrajectoryKind kind);

enum class SweepMode { FixedTrajectory, FullBcd };

struct SweepCell {
  double eta = 0.0;
  bool ok = false;
  std::string error;
};

struct SweepTable {
  std::vector<double> grid;             // homogeneous theta per row
  std::vector<TrajectoryKind> kinds;    // column order
  std::vector<std::vector<SweepCell>>
      cells;                            // grid.size() x kinds.size()
};

// For each grid theta (applied to every user) and each trajectory kind,
// tabulates the optimized eta. FixedTrajectory freezes all four
// trajectories at the first grid point (the proposed one from a full BCD
// run) and re-solves only the allocation per theta, so each column is
// exactly non-increasing; FullBcd reruns BCD per theta for the proposed
// column and regenerates the circular baseline (whose radius depends on
// theta). Rows run concurrently; results are merged in grid order.
SweepTable theta_sweep(const Scenario& sc, const std::vector<double>& grid,
                       SweepMode mode, const BcdConfig& config = {});

}  // namespace uavmm
