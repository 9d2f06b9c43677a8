#pragma once

#include <cstdint>

#include "factorgan/core/rng.hpp"

namespace fgan::shapeworld {

// Declared parameter ranges. These double as the interpretable ranges the
// control encoders validate against.
inline constexpr double kPosLo = 0.15, kPosHi = 0.85;
inline constexpr double kThetaLo = -90.0, kThetaHi = 90.0;  // [lo, hi)
inline constexpr double kScaleLo = 0.3, kScaleHi = 0.8;
inline constexpr double kIllumSlope = 0.3;               // |gx|,|gy| bound
inline constexpr double kBaseLo = 0.6, kBaseHi = 1.0;    // base brightness
inline constexpr double kChroma = 0.7;                   // fill max-min
inline constexpr double kFloorHi = 0.3;                  // fill min channel

struct SceneParams {
  int shape_class = 0;
  double x = 0.5, y = 0.5;  // shape center, normalized image coords
  double theta = 0.0;       // axis angle, degrees in [-90, 90)
  double scale = 0.5;       // fraction of image half-width
  double r = 1.0, g = 0.0, b = 0.0;  // fill color
  double gx = 0.0, gy = 0.0;         // luminance gradient
  double b0 = 1.0;                   // base brightness
  std::uint32_t bg_seed = 0;
};

// Throws ValidationError naming the offending field.
void validate_scene(const SceneParams& p);

// Uniform over the declared ranges. Fill colors have constant chroma
// kChroma with the minimum channel in [0, kFloorHi] and uniform hue.
SceneParams sample_scene(Rng& rng);
SceneParams sample_scene(std::uint64_t rng_seed);

}  // namespace fgan::shapeworld
