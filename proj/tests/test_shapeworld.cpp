#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>

#include "factorgan/core/hash.hpp"
#include "factorgan/shapeworld/contours.hpp"
#include "factorgan/shapeworld/dataset.hpp"
#include "factorgan/shapeworld/render.hpp"

using namespace fgan;
using namespace fgan::shapeworld;

namespace {

// Saturation-weighted centroid straight off pixels; independent of the
// predictors module on purpose.
std::pair<double, double> pixel_centroid(const Image<double>& img) {
  double sw = 0, sx = 0, sy = 0;
  for (int y = 0; y < img.res; ++y)
    for (int x = 0; x < img.res; ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      const double w = std::max({r, g, b}) - std::min({r, g, b});
      sw += w;
      sx += w * (x + 0.5) / img.res;
      sy += w * (y + 0.5) / img.res;
    }
  return {sx / sw, sy / sw};
}

double chroma_mass(const Image<double>& img) {
  double sw = 0;
  for (int y = 0; y < img.res; ++y)
    for (int x = 0; x < img.res; ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      sw += std::max({r, g, b}) - std::min({r, g, b});
    }
  return sw;
}

SceneParams flat_scene() {
  SceneParams p;
  p.shape_class = 0;
  p.x = p.y = 0.5;
  p.theta = 0;
  p.scale = 0.5;
  p.r = 1;
  p.g = 0.1;
  p.b = 0.1;
  p.gx = p.gy = 0;
  p.b0 = 0.9;
  p.bg_seed = 77;
  return p;
}

}  // namespace

TEST_CASE("contour tables are normalized") {
  const auto& lib = ShapeLibrary::instance();
  const double area = lib.area();
  for (int k = 0; k < kNumClasses; ++k) {
    const auto& poly = lib.contour(k);
    CHECK(polygon_area(poly) == doctest::Approx(area).epsilon(1e-9));
    const auto c = polygon_centroid(poly);
    CHECK(std::abs(c.x()) < 1e-12);
    CHECK(std::abs(c.y()) < 1e-12);
    const auto mu = polygon_central_moments(poly);
    CHECK(std::abs(mu.z()) < 1e-12);          // principal axis aligned
    CHECK(mu.x() / mu.y() > 1.25);            // orientation well defined
    for (const auto& v : poly) CHECK(v.norm() <= kMaxRadius + 1e-12);
  }
}

TEST_CASE("shapes stay inside the frame at extreme parameters") {
  for (int k = 0; k < kNumClasses; ++k) {
    SceneParams p = flat_scene();
    p.shape_class = k;
    p.x = p.y = 0.15;
    p.scale = 0.8;
    p.theta = -37;
    const auto cov = coverage_mask(p, 64);
    // no coverage on the border ring
    for (int i = 0; i < 64; ++i) {
      CHECK(cov[i] == 0.0);
      CHECK(cov[63 * 64 + i] == 0.0);
      CHECK(cov[i * 64] == 0.0);
      CHECK(cov[i * 64 + 63] == 0.0);
    }
  }
}

TEST_CASE("render is deterministic") {
  const SceneParams p = sample_scene(12345u);
  const auto a = render(p, 64);
  const auto b = render(p, 64);
  CHECK((a.data == b.data).all());
}

TEST_CASE("centered shape has centered saturation centroid") {
  SceneParams p = flat_scene();
  const auto img = render(p, 64);
  auto [cx, cy] = pixel_centroid(img);
  CHECK(std::abs(cx - 0.5) <= 1.0 / 64);
  CHECK(std::abs(cy - 0.5) <= 1.0 / 64);
}

TEST_CASE("doubling scale multiplies saturation mass by 4") {
  SceneParams p = flat_scene();
  p.scale = 0.3;
  const double m1 = chroma_mass(render(p, 64));
  p.scale = 0.6;
  const double m2 = chroma_mass(render(p, 64));
  CHECK(m2 / m1 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("translation equivariance of the centroid") {
  SceneParams p = flat_scene();
  p.x = 0.35;
  p.y = 0.40;
  auto [cx0, cy0] = pixel_centroid(render(p, 64));
  p.x += 0.25;
  p.y += 0.20;
  auto [cx1, cy1] = pixel_centroid(render(p, 64));
  CHECK(std::abs((cx1 - cx0) - 0.25) <= 1.0 / 64);
  CHECK(std::abs((cy1 - cy0) - 0.20) <= 1.0 / 64);
}

TEST_CASE("out-of-range params name the offending field") {
  SceneParams p = flat_scene();
  p.scale = 0.95;
  CHECK_THROWS_WITH_AS(render(p, 64), doctest::Contains("scale"),
                       ValidationError);
  p = flat_scene();
  p.x = 0.05;
  CHECK_THROWS_WITH_AS(render(p, 64), doctest::Contains("x"), ValidationError);
  p = flat_scene();
  p.r = p.g = p.b = 0.8;  // gray fill
  CHECK_THROWS_WITH_AS(render(p, 64), doctest::Contains("saturation"),
                       ValidationError);
  p = flat_scene();
  CHECK_THROWS_AS(render(p, 48), ValidationError);
}

TEST_CASE("background is exactly gray before compositing") {
  SceneParams p = flat_scene();
  p.scale = 0.3;  // plenty of pure background
  const auto img = render(p, 64);
  // far corner pixel: no shape coverage there
  CHECK(img.at(0, 2, 2) == img.at(1, 2, 2));
  CHECK(img.at(1, 2, 2) == img.at(2, 2, 2));
}

TEST_CASE("sample_scene determinism and ranges") {
  const SceneParams a = sample_scene(999u);
  const SceneParams b = sample_scene(999u);
  CHECK(a.x == b.x);
  CHECK(a.theta == b.theta);
  CHECK(a.bg_seed == b.bg_seed);

  auto rng = Rng::seeded(4242);
  const int n = 10000;
  double sx = 0, sth = 0, ssc = 0, sgx = 0, sb0 = 0;
  for (int i = 0; i < n; ++i) {
    const SceneParams p = sample_scene(rng);
    CHECK_NOTHROW(validate_scene(p));
    sx += p.x;
    sth += p.theta;
    ssc += p.scale;
    sgx += p.gx;
    sb0 += p.b0;
  }
  // per-field mean within 2% of the range midpoint (2% of range width)
  CHECK(std::abs(sx / n - 0.5) < 0.02 * 0.7);
  CHECK(std::abs(sth / n - 0.0) < 0.02 * 180);
  CHECK(std::abs(ssc / n - 0.55) < 0.02 * 0.5);
  CHECK(std::abs(sgx / n - 0.0) < 0.02 * 0.6);
  CHECK(std::abs(sb0 / n - 0.8) < 0.02 * 0.4);
}

TEST_CASE("dataset round-trips and is reproducible") {
  namespace fs = std::filesystem;
  const auto dir1 = fs::temp_directory_path() / "fgan_ds_a";
  const auto dir2 = fs::temp_directory_path() / "fgan_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  const auto t0 = std::chrono::steady_clock::now();
  make_dataset(100, 32, 7u, dir1.string());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  CHECK(secs < 30.0);  // 10k at 64x64 stays well under the 5 min budget

  make_dataset(100, 32, 7u, dir2.string());
  CHECK(hash_file((dir1 / "params.csv").string()) ==
        hash_file((dir2 / "params.csv").string()));
  CHECK(hash_file((dir1 / "img_000042.png").string()) ==
        hash_file((dir2 / "img_000042.png").string()));

  const Dataset d = Dataset::load(dir1.string());
  CHECK(d.size() == 100);
  CHECK(d.meta.resolution == 32);
  for (int i : {0, 13, 99}) {
    const auto img = render(d.params[i], 32);
    const auto expected = to_u8(img);
    CHECK(d.raw_rgb(i) == expected);  // exact round trip through PNG
  }
  CHECK_THROWS_AS(make_dataset(0, 32, 7u, dir1.string()), ValidationError);
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
