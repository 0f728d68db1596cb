#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

namespace uavmm {

/// 0.5 x' Q x + b' x + c <= 0 with Q positive semidefinite.
struct QuadraticConstraint {
  Eigen::SparseMatrix<double> quadratic;  // symmetric PSD; empty => linear row
  Eigen::VectorXd linear;
  double constant = 0.0;
};

/// minimize objective' x  subject to  quadratic constraints and equality rows.
struct ConvexQcqp {
  Eigen::VectorXd objective;
  std::vector<QuadraticConstraint> constraints;
  Eigen::MatrixXd eq_lhs;  // may be 0 x n
  Eigen::VectorXd eq_rhs;

  int dim() const { return static_cast<int>(objective.size()); }
  // Throws NumericsError if a quadratic term fails the PSD check or a
  // dimension is inconsistent.
  void validate() const;
};

enum class QcqpStatus { Optimal, Infeasible, MaxIterations };

struct QcqpSolution {
  QcqpStatus status = QcqpStatus::Infeasible;
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd multipliers;  // one per inequality constraint
  double kkt_stationarity = 0.0;
  double kkt_feasibility = 0.0;
  double kkt_complementarity = 0.0;
  int newton_steps = 0;
};

struct QcqpOptions {
  double gap_tol = 1e-9;      // target barrier duality gap, scaled
  double barrier_factor = 10.0;
  int max_newton_steps = 4000;
};

// Log-barrier interior-point method. `initial` need not be feasible; a
// phase-I problem is solved first when it is not strictly feasible.
QcqpSolution solve_qcqp(const ConvexQcqp& qcqp, const Eigen::VectorXd& initial,
                        const QcqpOptions& opts = {});

}  // namespace uavmm
