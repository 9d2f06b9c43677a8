#include "factorgan/shapeworld/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "factorgan/core/common.hpp"
#include "factorgan/shapeworld/contours.hpp"

namespace fgan::shapeworld {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError("scene." + field + " " + what);
}

}  // namespace

void validate_scene(const SceneParams& p) {
  require(p.shape_class >= 0 && p.shape_class < kNumClasses, "shape_class",
          "must be in [0,8)");
  require(p.x >= kPosLo && p.x <= kPosHi, "x", "must be in [0.15,0.85]");
  require(p.y >= kPosLo && p.y <= kPosHi, "y", "must be in [0.15,0.85]");
  require(p.theta >= kThetaLo && p.theta < kThetaHi, "theta",
          "must be in [-90,90)");
  require(p.scale >= kScaleLo && p.scale <= kScaleHi, "scale",
          "must be in [0.3,0.8]");
  for (double c : {p.r, p.g, p.b})
    require(std::isfinite(c) && c >= 0.0 && c <= 1.0, "fill_color",
            "channels must be in [0,1]");
  const double hi = std::max({p.r, p.g, p.b});
  const double lo = std::min({p.r, p.g, p.b});
  require(hi > 0.0 && (hi - lo) / hi >= 0.5, "fill_color",
          "saturation must be >= 0.5");
  require(std::abs(p.gx) <= kIllumSlope, "gx", "must be in [-0.3,0.3]");
  require(std::abs(p.gy) <= kIllumSlope, "gy", "must be in [-0.3,0.3]");
  require(p.b0 >= kBaseLo && p.b0 <= kBaseHi, "b0", "must be in [0.6,1.0]");
}

SceneParams sample_scene(Rng& rng) {
  SceneParams p;
  p.shape_class = static_cast<int>(rng.uniform_int(kNumClasses));
  p.x = rng.uniform(kPosLo, kPosHi);
  p.y = rng.uniform(kPosLo, kPosHi);
  p.theta = rng.uniform(kThetaLo, kThetaHi);
  p.scale = rng.uniform(kScaleLo, kScaleHi);

  // Constant-chroma fill: hue sector formula with max-min = kChroma.
  const double hue = rng.uniform(0.0, 360.0);
  const double floor = rng.uniform(0.0, kFloorHi);
  const double hp = hue / 60.0;
  const double xc = kChroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = kChroma; g = xc; break;
    case 1: r = xc; g = kChroma; break;
    case 2: g = kChroma; b = xc; break;
    case 3: g = xc; b = kChroma; break;
    case 4: r = xc; b = kChroma; break;
    default: r = kChroma; b = xc; break;
  }
  p.r = r + floor;
  p.g = g + floor;
  p.b = b + floor;

  p.gx = rng.uniform(-kIllumSlope, kIllumSlope);
  p.gy = rng.uniform(-kIllumSlope, kIllumSlope);
  p.b0 = rng.uniform(kBaseLo, kBaseHi);
  p.bg_seed = static_cast<std::uint32_t>(rng.bits());
  return p;
}

SceneParams sample_scene(std::uint64_t rng_seed) {
  Rng rng = Rng::seeded(rng_seed);
  return sample_scene(rng);
}

}  // namespace fgan::shapeworld
