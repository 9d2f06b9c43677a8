#include "factorgan/shapeworld/contours.hpp"

#include <algorithm>
#include <cmath>

#include "factorgan/core/common.hpp"

namespace fgan::shapeworld {

namespace {

// Raw contour tables. Coordinates are arbitrary units; normalization fixes
// centroid, principal axis, area and radius. All eight are asymmetric with
// clearly unequal principal moments so the moment-based orientation is
// well defined, and their silhouettes differ enough to separate in Hu space.
const std::vector<std::vector<Eigen::Vector2d>>& raw_tables() {
  static const std::vector<std::vector<Eigen::Vector2d>> tables = {
      // 0 ram: blunt left end, snub nose right (moderate along-axis skew)
      {{-1.00, -0.60}, {0.20, -0.47}, {1.08, -0.20}, {1.08, 0.20}, {0.20, 0.47}, {-1.00, 0.60}},
      // 1 house: flat bottom, low peak (mild cross-axis skew)
      {{-1.00, -0.45}, {1.00, -0.45}, {1.02, 0.18}, {0.00, 0.55}, {-1.02, 0.18}},
      // 2 bite: deep off-center dent (concave, diagonal pattern)
      {{-1.00, -0.50}, {1.00, -0.50}, {1.00, 0.50}, {0.62, 0.50}, {0.42, 0.02}, {0.10, 0.50}, {-1.00, 0.50}},
      // 3 slot: bar with a deep cut in the left end
      {{-1.00, -0.50}, {1.00, -0.50}, {1.00, 0.50}, {-1.00, 0.50}, {-1.00, 0.14}, {-0.45, 0.14}, {-0.45, -0.14}, {-1.00, -0.14}},
      // 4 block L
      {{-1.00, -0.55}, {1.00, -0.55}, {1.00, 0.00}, {0.00, 0.00}, {0.00, 0.55}, {-1.00, 0.55}},
      // 5 lens: centro-symmetric octagon (near-zero third moments)
      {{-1.05, -0.30}, {-0.55, -0.52}, {0.55, -0.52}, {1.05, -0.30}, {1.05, 0.30}, {0.55, 0.52}, {-0.55, 0.52}, {-1.05, 0.30}},
      // 6 tee: deep stem, thin bar (strong cross-axis skew)
      {{-1.00, -0.16}, {-0.28, -0.16}, {-0.28, -0.62}, {0.30, -0.62}, {0.30, -0.16}, {1.00, -0.16}, {1.00, 0.22}, {-1.00, 0.22}},
      // 7 prow pentagon: mixed along+cross skew
      {{-1.00, -0.30}, {0.35, -0.62}, {1.15, -0.05}, {0.10, 0.58}, {-0.90, 0.25}},
  };
  return tables;
}

double cross_term(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - b.x() * a.y();
}

}  // namespace

double polygon_area(const std::vector<Eigen::Vector2d>& v) {
  double a = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    a += cross_term(v[i], v[(i + 1) % v.size()]);
  return 0.5 * a;
}

Eigen::Vector2d polygon_centroid(const std::vector<Eigen::Vector2d>& v) {
  const double a = polygon_area(v);
  Eigen::Vector2d c(0, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& p = v[i];
    const auto& q = v[(i + 1) % v.size()];
    c += (p + q) * cross_term(p, q);
  }
  return c / (6.0 * a);
}

Eigen::Vector3d polygon_central_moments(const std::vector<Eigen::Vector2d>& v) {
  const double a = polygon_area(v);
  const Eigen::Vector2d c = polygon_centroid(v);
  double ixx = 0, iyy = 0, ixy = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& p = v[i];
    const auto& q = v[(i + 1) % v.size()];
    const double w = cross_term(p, q);
    ixx += w * (p.x() * p.x() + p.x() * q.x() + q.x() * q.x());
    iyy += w * (p.y() * p.y() + p.y() * q.y() + q.y() * q.y());
    ixy += w * (p.x() * q.y() + 2 * p.x() * p.y() + 2 * q.x() * q.y() +
                q.x() * p.y());
  }
  ixx /= 12.0;
  iyy /= 12.0;
  ixy /= 24.0;
  return {ixx / a - c.x() * c.x(), iyy / a - c.y() * c.y(),
          ixy / a - c.x() * c.y()};
}

ShapeLibrary::ShapeLibrary() {
  auto tables = raw_tables();
  contours_.reserve(tables.size());

  // Per-class second-moment aspect after normalization. Bounded on both
  // sides: enough anisotropy for a stable orientation estimate, fat enough
  // that small-scale renders stay interior-dominated.
  const double target_aspect[kNumClasses] = {3.15, 3.35, 3.50, 3.00,
                                             3.60, 3.70, 3.25, 3.45};

  // area 1, centroid 0, principal axis along x, pinned aspect
  std::vector<std::vector<Eigen::Vector2d>> unit;
  double max_radius = 0;
  int k = 0;
  for (auto verts : tables) {
    if (polygon_area(verts) < 0) std::reverse(verts.begin(), verts.end());
    Eigen::Vector2d c = polygon_centroid(verts);
    for (auto& p : verts) p -= c;
    Eigen::Vector3d mu = polygon_central_moments(verts);
    const double phi = 0.5 * std::atan2(2.0 * mu.z(), mu.x() - mu.y());
    const Eigen::Rotation2Dd rot(-phi);
    for (auto& p : verts) p = rot * p;

    mu = polygon_central_moments(verts);
    const double stretch = std::sqrt(std::sqrt((mu.x() / mu.y()) /
                                               target_aspect[k]));
    for (auto& p : verts) p = {p.x() / stretch, p.y() * stretch};
    c = polygon_centroid(verts);
    for (auto& p : verts) p -= c;

    const double s = 1.0 / std::sqrt(polygon_area(verts));
    for (auto& p : verts) p *= s;
    for (const auto& p : verts) max_radius = std::max(max_radius, p.norm());
    unit.push_back(std::move(verts));
    ++k;
  }

  const double scale = kMaxRadius / max_radius;
  area_ = scale * scale;
  for (auto& verts : unit) {
    for (auto& p : verts) p *= scale;
    const Eigen::Vector3d mu = polygon_central_moments(verts);
    if (!(mu.x() > mu.y()))
      throw Error("contour normalization: principal axis not along x");
    moments_.emplace_back(mu.x(), mu.y());
    contours_.push_back(std::move(verts));
  }
}

const ShapeLibrary& ShapeLibrary::instance() {
  static ShapeLibrary lib;
  return lib;
}

const std::vector<Eigen::Vector2d>& ShapeLibrary::contour(
    int shape_class) const {
  if (shape_class < 0 || shape_class >= kNumClasses)
    throw ValidationError("shape_class out of range [0,8)");
  return contours_[shape_class];
}

Eigen::Vector2d ShapeLibrary::principal_moments(int shape_class) const {
  if (shape_class < 0 || shape_class >= kNumClasses)
    throw ValidationError("shape_class out of range [0,8)");
  return moments_[shape_class];
}

}  // namespace fgan::shapeworld
