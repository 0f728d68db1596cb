#pragma once

#include <Eigen/Core>

namespace uavmm {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

/// maximize objective' x  subject to  constraints x <= rhs,  lower <= x <= upper.
/// Bounds may be +-infinity.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd constraints;
  Eigen::VectorXd rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_rows() const { return static_cast<int>(rhs.size()); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double value = 0.0;
  // Multipliers of the inequality rows (nonnegative at optimality).
  Eigen::VectorXd row_duals;
  int iterations = 0;
};

// Bounded-variable primal simplex, deterministic (Dantzig pricing with a
// Bland's-rule fallback against cycling). Phase I uses artificials.
LpSolution solve_lp(const LinearProgram& lp);

}  // namespace uavmm
