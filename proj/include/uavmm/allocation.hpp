#pragma once

#include <Eigen/Core>
#include <optional>

#include "uavmm/scenario.hpp"

namespace uavmm {

/// Multipliers of the partial Lagrangian: lambda for the per-user average
/// throughput constraints, mu for the per-slot MRR constraints, beta for the
/// per-slot power budgets, nu for the per-slot bandwidth budgets.
struct DualState {
  Eigen::VectorXd lambda;  // K
  Eigen::MatrixXd mu;      // K x N
  Eigen::VectorXd beta;    // N
  Eigen::VectorXd nu;      // N

  static DualState zeros(int users, int slots);
  // Default starting point: lambda = 1/K, mu = 0, beta = nu = 1.
  static DualState initial(int users, int slots);

  int dim() const;
  Eigen::VectorXd pack() const;
  static DualState unpack(const Eigen::VectorXd& v, int users, int slots);

  // sum_k lambda_k + sum_{k,n} mu_kn theta_k - 1; zero at any dual point
  // where the dual function is bounded (the eta column of the Lagrangian).
  double normalization_residual(const Eigen::VectorXd& theta) const;
};

struct KktReport {
  double stationarity = 0.0;     // water-filling marginal-utility residual
  double primal = 0.0;           // worst constraint violation (>= 0)
  double complementarity = 0.0;  // max |multiplier * slack|
};

struct AllocationSolution {
  double eta = 0.0;
  Allocation allocation;
  DualState dual;
  KktReport kkt;
  double dual_bound = 0.0;  // certified upper bound on the optimal eta
  int lp_solves = 0;
  int ellipsoid_iterations = 0;
};

struct AllocationConfig {
  double gap_tol = 1e-8;              // relative duality-gap target
  int refinement_cap = 80;            // water-filling / LP alternations
  int iteration_cap_factor = 500;     // ellipsoid budget: factor * dual dim
  double initial_radius = 1e3;        // ellipsoid ball radius
  int plateau_limit = 50;             // stop after this many non-improving cuts
  double diameter_tol = 1e-5;         // ellipsoid localizer diameter stop
  int polish_cell_cap = 256;          // deep KKT polish only when K*N is below
  const Allocation* incumbent = nullptr;  // never return worse than this
  const DualState* warm_start = nullptr;
};

// [ (lambda + N mu) / (N beta ln2) - 1/g ]^+ , the optimal power spectral
// density of a served user-slot pair. beta is clamped below at 1e-12.
double waterfill_power_density(double lambda, double mu, double beta, double gain,
                               int slots);

// Net per-slot Lagrangian utility of serving the pair at density p_tilde.
double pair_utility(double lambda, double mu, double beta, double nu, double gain,
                    double p_tilde, int slots);

// 1 if the pair's utility is strictly positive, else 0 (ties resolve to 0).
int bandwidth_indicator(double lambda, double mu, double beta, double nu,
                        double gain, double p_tilde, int slots);

struct DualEvaluation {
  double value = 0.0;
  bool bounded = false;  // normalization residual within tolerance
  Allocation maximizer;  // alpha in {0,1}, power = alpha * p_tilde
};

// Evaluates the dual function at `dual` with the eta term pinned to zero;
// `bounded` is false when the normalization residual exceeds 1e-5.
DualEvaluation dual_function(const Scenario& sc, const Trajectory& traj,
                             const Eigen::VectorXd& theta, const DualState& dual);

struct DualSubgradient {
  DualState objective;       // subgradient of the dual objective
  bool feasibility = false;  // normalization constraint violated
  Eigen::VectorXd cut;       // packed feasibility cut when `feasibility`
};

DualSubgradient subgradients(const Scenario& sc, const Trajectory& traj,
                             const Eigen::VectorXd& theta, const DualState& dual,
                             const Allocation& maximizer);

// Fixes the water-filling densities at `dual`, then recovers (eta, alpha) by
// linear programming; the LP row prices give a refined dual estimate.
// Returns nullopt when a served user with theta > 0 has a zero-rate slot
// (eta would be forced to zero) or the LP fails.
std::optional<AllocationSolution> recover_primal(const Scenario& sc,
                                                 const Trajectory& traj,
                                                 const Eigen::VectorXd& theta,
                                                 const DualState& dual);

// Algorithm 1: dual refinement with LP primal recovery, ellipsoid fallback,
// duality-gap certified termination.
AllocationSolution solve_allocation(const Scenario& sc, const Trajectory& traj,
                                    const Eigen::VectorXd& theta,
                                    const AllocationConfig& config = {});

// min over users of R_k, and of r_k[n] / theta_k where theta_k > 0: the
// largest eta for which the allocation is feasible on this trajectory.
double achieved_eta(const Scenario& sc, const Trajectory& traj,
                    const Allocation& alloc, const Eigen::VectorXd& theta);

// Copy of the scenario with per-user MRRs replaced (used while annealing).
Scenario with_mrrs(const Scenario& sc, const Eigen::VectorXd& theta);

}  // namespace uavmm
