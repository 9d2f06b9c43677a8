#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fgan::shapeworld {

inline constexpr int kNumClasses = 8;

// Largest contour radius after normalization, in normalized image units.
// Containment: position >= 0.15 from the border and radius <= 0.5 * scale *
// kMaxRadius with scale <= 0.8 requires kMaxRadius <= 0.375.
inline constexpr double kMaxRadius = 0.36;

// Fixed contour tables, normalized at load: centroid at the origin,
// principal axis along +x (mu20 > mu02, mu11 = 0), identical area across
// classes, max radius kMaxRadius across the library.
class ShapeLibrary {
 public:
  static const ShapeLibrary& instance();

  const std::vector<Eigen::Vector2d>& contour(int shape_class) const;
  // Common area of every normalized contour (normalized units^2).
  double area() const { return area_; }
  // Principal second moments of class k at unit pose (per unit area).
  Eigen::Vector2d principal_moments(int shape_class) const;

 private:
  ShapeLibrary();
  std::vector<std::vector<Eigen::Vector2d>> contours_;
  std::vector<Eigen::Vector2d> moments_;
  double area_ = 0.0;
};

// Analytic polygon integrals (shoelace); exposed for oracle tests.
double polygon_area(const std::vector<Eigen::Vector2d>& v);
Eigen::Vector2d polygon_centroid(const std::vector<Eigen::Vector2d>& v);
// Central second moments per unit area: (cov_xx, cov_yy, cov_xy).
Eigen::Vector3d polygon_central_moments(const std::vector<Eigen::Vector2d>& v);

}  // namespace fgan::shapeworld
