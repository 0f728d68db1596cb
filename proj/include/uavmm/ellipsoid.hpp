#pragma once

#include <Eigen/Core>
#include <stdexcept>

namespace uavmm {

class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

/// Localizer {x : (x - center)' shape^-1 (x - center) <= 1} with SPD shape.
struct Ellipsoid {
  Eigen::VectorXd center;
  Eigen::MatrixXd shape;

  static Ellipsoid ball(const Eigen::VectorXd& center, double radius);

  int dim() const { return static_cast<int>(center.size()); }
  // Upper bound on the diameter, 2 * sqrt(trace(shape)).
  double diameter_bound() const;
  double log_det() const;
  bool contains(const Eigen::VectorXd& x) const;
};

// Minimum-volume ellipsoid containing {x in E : cut' (x - center) <= 0}
// (central cut). Throws NumericsError on numerical breakdown.
Ellipsoid ellipsoid_step(const Ellipsoid& e, const Eigen::VectorXd& cut);

}  // namespace uavmm
