#pragma once

#include <Eigen/Dense>

#include "factorgan/core/image.hpp"
#include "factorgan/shapeworld/scene.hpp"

namespace fgan::shapeworld {

// Deterministic procedural render. The shape is composited with
// coverage-based anti-aliasing (4x4 subsamples per pixel); the grayscale
// value-noise background is multiplied by the luminance plane
// b0 + gx*(x-1/2) + gy*(y-1/2); the result is clamped to [0,1].
Image<double> render(const SceneParams& params, int resolution);

// Exact foreground coverage in [0,1] per pixel, same sampling as render();
// the ground-truth mask oracle for predictor tests.
Eigen::ArrayXd coverage_mask(const SceneParams& params, int resolution);

// Luminance plane value at normalized coordinates.
inline double luminance_plane(const SceneParams& p, double x, double y) {
  return p.b0 + p.gx * (x - 0.5) + p.gy * (y - 0.5);
}

}  // namespace fgan::shapeworld
