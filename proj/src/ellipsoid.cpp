#include "uavmm/ellipsoid.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace uavmm {

Ellipsoid Ellipsoid::ball(const Eigen::VectorXd& center, double radius) {
  Ellipsoid e;
  e.center = center;
  e.shape = radius * radius *
            Eigen::MatrixXd::Identity(center.size(), center.size());
  return e;
}

double Ellipsoid::diameter_bound() const { return 2.0 * std::sqrt(shape.trace()); }

double Ellipsoid::log_det() const {
  Eigen::LLT<Eigen::MatrixXd> llt(shape);
  if (llt.info() != Eigen::Success)
    throw NumericsError("ellipsoid shape matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

bool Ellipsoid::contains(const Eigen::VectorXd& x) const {
  Eigen::LLT<Eigen::MatrixXd> llt(shape);
  if (llt.info() != Eigen::Success)
    throw NumericsError("ellipsoid shape matrix is not positive definite");
  const Eigen::VectorXd d = x - center;
  return d.dot(llt.solve(d)) <= 1.0 + 1e-12;
}

Ellipsoid ellipsoid_step(const Ellipsoid& e, const Eigen::VectorXd& cut) {
  const int m = e.dim();
  if (cut.size() != m) throw NumericsError("cut dimension mismatch");
  if (cut.norm() == 0.0) throw NumericsError("zero cut vector");

  const Eigen::VectorXd ag = e.shape * cut;
  const double gag = cut.dot(ag);
  if (!(gag > 0.0) || !std::isfinite(gag))
    throw NumericsError("ellipsoid update breakdown: g'Ag <= 0");
  const double denom = std::sqrt(gag);

  Ellipsoid out;
  if (m == 1) {
    // Interval bisection: keep the half below the center, then the smallest
    // interval covering it.
    out.center = e.center - 0.5 * ag / denom;
    out.shape = 0.25 * e.shape;
    return out;
  }

  out.center = e.center - (1.0 / (m + 1.0)) * ag / denom;
  const double scale = m * m / (m * m - 1.0);
  out.shape = scale * (e.shape - (2.0 / (m + 1.0)) * (ag * ag.transpose()) / gag);
  out.shape = 0.5 * (out.shape + out.shape.transpose());  // re-symmetrize
  return out;
}

}  // namespace uavmm
