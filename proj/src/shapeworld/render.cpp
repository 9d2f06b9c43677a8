#include "factorgan/shapeworld/render.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "factorgan/core/common.hpp"
#include "factorgan/shapeworld/contours.hpp"

namespace fgan::shapeworld {

namespace {

constexpr int kSubsamples = 12;       // per axis -> 144 samples per pixel
constexpr double kNoiseAmp = 0.035;   // background modulation depth
constexpr int kNoiseGrid0 = 16;       // coarse octave cells
constexpr double kOctaveW0 = 0.60;    // octave weights
constexpr double kOctaveW1 = 0.40;

void check_resolution(int res) {
  if (res != 32 && res != 64 && res != 128)
    throw ValidationError("resolution must be one of {32, 64, 128}");
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice(std::uint32_t seed, int octave, int ix, int iy) {
  std::uint64_t h = splitmix((std::uint64_t(seed) << 8) ^ std::uint64_t(octave));
  h = splitmix(h ^ (std::uint64_t(std::uint32_t(ix)) << 32) ^
               std::uint32_t(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint32_t seed, int octave, int grid, double x,
                   double y) {
  const double fx = x * grid;
  const double fy = y * grid;
  int ix = static_cast<int>(std::floor(fx));
  int iy = static_cast<int>(std::floor(fy));
  ix = std::clamp(ix, 0, grid - 1);
  iy = std::clamp(iy, 0, grid - 1);
  const double tx = smoothstep(std::clamp(fx - ix, 0.0, 1.0));
  const double ty = smoothstep(std::clamp(fy - iy, 0.0, 1.0));
  const double v00 = lattice(seed, octave, ix, iy);
  const double v10 = lattice(seed, octave, ix + 1, iy);
  const double v01 = lattice(seed, octave, ix, iy + 1);
  const double v11 = lattice(seed, octave, ix + 1, iy + 1);
  const double a = v00 + (v10 - v00) * tx;
  const double b = v01 + (v11 - v01) * tx;
  return a + (b - a) * ty;
}

bool point_in_polygon(const std::vector<Eigen::Vector2d>& v, double px,
                      double py) {
  bool inside = false;
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double yi = v[i].y(), yj = v[j].y();
    if ((yi > py) == (yj > py)) continue;
    const double xi = v[i].x(), xj = v[j].x();
    const double t = (py - yi) / (yj - yi);
    if (px < xi + t * (xj - xi)) inside = !inside;
  }
  return inside;
}

std::vector<Eigen::Vector2d> transformed_contour(const SceneParams& p) {
  const auto& base = ShapeLibrary::instance().contour(p.shape_class);
  const double rad = p.theta * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  std::vector<Eigen::Vector2d> out;
  out.reserve(base.size());
  const double k = 0.5 * p.scale;
  for (const auto& v : base) {
    const double vx = k * v.x(), vy = k * v.y();
    out.emplace_back(p.x + c * vx - s * vy, p.y + s * vx + c * vy);
  }
  return out;
}

}  // namespace

Eigen::ArrayXd coverage_mask(const SceneParams& params, int resolution) {
  check_resolution(resolution);
  validate_scene(params);

  const auto poly = transformed_contour(params);
  double lox = 1, hix = 0, loy = 1, hiy = 0;
  for (const auto& v : poly) {
    lox = std::min(lox, v.x());
    hix = std::max(hix, v.x());
    loy = std::min(loy, v.y());
    hiy = std::max(hiy, v.y());
  }
  const int px0 = std::max(0, static_cast<int>(lox * resolution) - 1);
  const int px1 = std::min(resolution - 1, static_cast<int>(hix * resolution) + 1);
  const int py0 = std::max(0, static_cast<int>(loy * resolution) - 1);
  const int py1 = std::min(resolution - 1, static_cast<int>(hiy * resolution) + 1);

  Eigen::ArrayXd cov = Eigen::ArrayXd::Zero(std::int64_t(resolution) * resolution);
  const double inv_res = 1.0 / resolution;
  const double step = inv_res / kSubsamples;
  for (int y = py0; y <= py1; ++y) {
    for (int x = px0; x <= px1; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSubsamples; ++sy) {
        const double py = y * inv_res + (sy + 0.5) * step;
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double px = x * inv_res + (sx + 0.5) * step;
          if (point_in_polygon(poly, px, py)) ++hits;
        }
      }
      cov[std::int64_t(y) * resolution + x] =
          hits / double(kSubsamples * kSubsamples);
    }
  }
  return cov;
}

Image<double> render(const SceneParams& params, int resolution) {
  check_resolution(resolution);
  validate_scene(params);

  const Eigen::ArrayXd cov = coverage_mask(params, resolution);

  // 2-octave grayscale value noise, normalized to exact mean 1/2 so the
  // background luminance equals the plane on average.
  const int n_px = resolution * resolution;
  Eigen::ArrayXd noise(n_px);
  const double inv_res = 1.0 / resolution;
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double cx = (x + 0.5) * inv_res;
      const double cy = (y + 0.5) * inv_res;
      noise[std::int64_t(y) * resolution + x] =
          kOctaveW0 * value_noise(params.bg_seed, 0, kNoiseGrid0, cx, cy) +
          kOctaveW1 * value_noise(params.bg_seed, 1, 2 * kNoiseGrid0, cx, cy);
    }
  }
  noise += 0.5 - noise.mean();

  Image<double> img(resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const std::int64_t i = std::int64_t(y) * resolution + x;
      const double lum = luminance_plane(params, (x + 0.5) * inv_res,
                                         (y + 0.5) * inv_res);
      const double bg =
          std::clamp(lum * (1.0 + kNoiseAmp * (noise[i] - 0.5)), 0.0, 1.0);
      const double a = cov[i];
      img.at(0, y, x) = std::clamp(a * params.r + (1.0 - a) * bg, 0.0, 1.0);
      img.at(1, y, x) = std::clamp(a * params.g + (1.0 - a) * bg, 0.0, 1.0);
      img.at(2, y, x) = std::clamp(a * params.b + (1.0 - a) * bg, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace fgan::shapeworld
