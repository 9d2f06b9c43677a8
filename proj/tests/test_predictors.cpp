#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "factorgan/predictors/predictors.hpp"
#include "factorgan/shapeworld/contours.hpp"
#include "factorgan/shapeworld/render.hpp"
#include "support/gradcheck.hpp"

using namespace fgan;
using namespace fgan::predictors;
using shapeworld::render;
using shapeworld::SceneParams;
using T = ad::Tensor<double>;

namespace {

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
  p.bg_seed = 5;
  return p;
}

T img_of(const SceneParams& p, int res = 64) {
  return to_tensor<double>(render(p, res));
}

Image<double> gray_image(int res, double v) {
  Image<double> img(res);
  img.data.setConstant(v);
  return img;
}

// Smooth isotropic disc, for the degenerate-orientation branch.
Image<double> disc_image(int res) {
  Image<double> img(res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double dx = (x + 0.5) / res - 0.5, dy = (y + 0.5) / res - 0.5;
      const double a =
          std::clamp(8.0 * (0.25 - std::sqrt(dx * dx + dy * dy)), 0.0, 1.0);
      img.at(0, y, x) = 0.3 + 0.7 * a;
      img.at(1, y, x) = 0.3;
      img.at(2, y, x) = 0.3;
    }
  return img;
}

double axis_diff(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 180.0 - d);
}

double spearman(std::vector<double> a, std::vector<double> b) {
  auto ranks = [](std::vector<double> v) {
    std::vector<int> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = int(i);
    std::sort(idx.begin(), idx.end(),
              [&](int x, int y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = double(i);
    return r;
  };
  const auto ra = ranks(std::move(a)), rb = ranks(std::move(b));
  const double n = double(ra.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("saturation weights: gray, mask containment, chroma linearity") {
  auto gray = to_tensor<double>(gray_image(32, 0.5));
  CHECK(saturation_weights(gray).value().abs().maxCoeff() == 0.0);

  SceneParams p = flat_scene();
  const auto cov = shapeworld::coverage_mask(p, 64);
  auto w = saturation_weights(img_of(p)).value();
  double inside = 0, total = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    total += w[i];
    if (cov[i] > 0) inside += w[i];
  }
  CHECK(inside / total >= 0.95);

  // linear in chroma: scale per-channel offsets about the pixel mean
  auto rng = Rng::seeded(3);
  Image<double> base(16);
  for (Eigen::Index i = 0; i < base.data.size(); ++i)
    base.data[i] = rng.uniform(0.2, 0.8);
  Image<double> scaled(16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const double m =
          (base.at(0, y, x) + base.at(1, y, x) + base.at(2, y, x)) / 3;
      for (int c = 0; c < 3; ++c)
        scaled.at(c, y, x) = m + 0.5 * (base.at(c, y, x) - m);
    }
  auto w1 = saturation_weights(to_tensor<double>(base)).value();
  auto w2 = saturation_weights(to_tensor<double>(scaled)).value();
  CHECK((w2 - 0.5 * w1).abs().maxCoeff() < 1e-12);
}

TEST_CASE("centroid: centered, ground truth, degenerate") {
  CHECK(centroid(img_of(flat_scene())).value()[0] ==
        doctest::Approx(0.5).epsilon(1.0 / 64));
  SceneParams p = flat_scene();
  p.x = 0.3;
  p.y = 0.7;
  auto c = centroid(img_of(p)).value();
  CHECK(std::abs(c[0] - 0.3) < 0.01);
  CHECK(std::abs(c[1] - 0.7) < 0.01);
  CHECK_THROWS_AS(centroid(to_tensor<double>(gray_image(32, 0.4))),
                  DegenerateMass);
}

TEST_CASE("orientation: ground truth, axis symmetry, degenerate blob") {
  SceneParams p = flat_scene();
  auto th0 = orientation(img_of(p)).item();
  CHECK(std::abs(th0) <= 2.0);

  p.theta = 35;
  auto img = render(p, 64);
  Image<double> rot(64);  // 180-degree rotation is an exact pixel permutation
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        rot.at(c, y, x) = img.at(c, 63 - y, 63 - x);
  const double a = orientation(to_tensor<double>(img)).item();
  const double b = orientation(to_tensor<double>(rot)).item();
  CHECK(axis_diff(a, b) < 1e-6);

  CHECK_THROWS_AS(orientation(to_tensor<double>(disc_image(64))),
                  DegenerateOrientation);
}

TEST_CASE("log_mass: scale law, determinism, translation invariance") {
  SceneParams p = flat_scene();
  p.scale = 0.3;
  const double m1 = log_mass(img_of(p)).item();
  p.scale = 0.6;
  const double m2 = log_mass(img_of(p)).item();
  CHECK(m2 - m1 == doctest::Approx(std::log(4.0)).epsilon(0.10));

  CHECK(log_mass(img_of(p)).item() == log_mass(img_of(p)).item());

  p = flat_scene();
  p.scale = 0.4;
  p.x = 0.3;
  const double a = log_mass(img_of(p)).item();
  p.x = 0.7;
  p.y = 0.65;
  const double b = log_mass(img_of(p)).item();
  CHECK(std::abs(b - a) / std::abs(a) < 0.01);
}

TEST_CASE("mean_color: pure red, position invariance, degenerate") {
  SceneParams p = flat_scene();
  p.r = 1;
  p.g = 0;
  p.b = 0;
  p.b0 = 1.0;  // flat unit illumination
  auto col = mean_color(img_of(p)).value();
  CHECK(std::abs(col[0] - 1.0) < 0.05);
  CHECK(std::abs(col[1] - 0.0) < 0.05);
  CHECK(std::abs(col[2] - 0.0) < 0.05);

  p = flat_scene();
  p.x = 0.3;
  auto c1 = mean_color(img_of(p)).value();
  p.x = 0.68;
  auto c2 = mean_color(img_of(p)).value();
  CHECK((c1 - c2).abs().maxCoeff() < 0.01);

  CHECK_THROWS_AS(mean_color(to_tensor<double>(gray_image(32, 0.4))),
                  DegenerateMass);
}

TEST_CASE("illum_plane: flat, gradient, constant shift linearity") {
  SceneParams p = flat_scene();
  p.b0 = 0.8;
  auto fit = illum_plane(img_of(p)).value();
  CHECK(std::abs(fit[0]) < 0.02);
  CHECK(std::abs(fit[1]) < 0.02);
  CHECK(std::abs(fit[2] - 0.8) < 0.02);

  p.gx = 0.2;
  p.gy = -0.1;
  fit = illum_plane(img_of(p)).value();
  CHECK(std::abs(fit[0] - 0.2) < 0.02);
  CHECK(std::abs(fit[1] + 0.1) < 0.02);
  CHECK(std::abs(fit[2] - 0.8) < 0.02);

  // +0.05 on all pixels moves b0 only
  p = flat_scene();
  p.b0 = 0.7;
  auto img = render(p, 64);
  auto f1 = illum_plane(to_tensor<double>(img)).value();
  Image<double> shifted = img;
  shifted.data += 0.05;
  auto f2 = illum_plane(to_tensor<double>(shifted)).value();
  CHECK(f2[2] - f1[2] == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(std::abs(f2[0] - f1[0]) < 1e-3);
  CHECK(std::abs(f2[1] - f1[1]) < 1e-3);
}

TEST_CASE("hu embedding: pose/scale invariance, class separation, identity") {
  SceneParams p = flat_scene();
  p.scale = 0.5;
  p.theta = 10;
  auto e1 = hu_embedding(img_of(p));
  p.theta = 47;
  p.scale = 0.7;
  p.x = 0.4;
  p.y = 0.6;
  auto e2 = hu_embedding(img_of(p));
  CHECK(metric_distance(Distance::Cosine, e1, e2).item() < 0.02);

  // cross-class distances dominate same-class ones at fixed pose
  double max_same = 0, min_cross = 1e9;
  std::vector<T> embs;
  for (int k = 0; k < shapeworld::kNumClasses; ++k) {
    SceneParams q = flat_scene();
    q.shape_class = k;
    q.scale = 0.55;
    auto a = hu_embedding(img_of(q));
    q.scale = 0.65;
    q.theta = 25;
    auto b = hu_embedding(img_of(q));
    max_same =
        std::max(max_same, metric_distance(Distance::Cosine, a, b).item());
    embs.push_back(a);
  }
  for (int i = 0; i < shapeworld::kNumClasses; ++i)
    for (int j = i + 1; j < shapeworld::kNumClasses; ++j)
      min_cross = std::min(
          min_cross, metric_distance(Distance::Cosine, embs[i], embs[j]).item());
  CHECK(min_cross > 5.0 * max_same);

  CHECK(metric_distance(Distance::Cosine, embs[0], embs[0]).item() == 0.0);
}

TEST_CASE("gram style: identity, flip invariance, texture sensitivity") {
  SceneParams p = flat_scene();
  auto e = gram_style_embedding(img_of(p));
  CHECK(metric_distance(Distance::L2, e, e).item() == 0.0);

  // median pairwise distance over random scenes
  std::vector<T> pool;
  auto rng = Rng::seeded(21);
  for (int i = 0; i < 24; ++i)
    pool.push_back(gram_style_embedding(
        to_tensor<double>(render(shapeworld::sample_scene(rng), 64))));
  std::vector<double> dists;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      dists.push_back(metric_distance(Distance::L2, pool[i], pool[j]).item());
  std::sort(dists.begin(), dists.end());
  const double median = dists[dists.size() / 2];

  auto img = render(p, 64);
  Image<double> flip(64);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) flip.at(c, y, x) = img.at(c, y, 63 - x);
  const double d_flip =
      metric_distance(Distance::L2, gram_style_embedding(to_tensor<double>(img)),
                      gram_style_embedding(to_tensor<double>(flip)))
          .item();
  CHECK(d_flip < 0.05 * median);

  // same shape on a smooth vs a high-frequency background
  Image<double> smooth = img;
  Image<double> busy = img;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      if (std::max({r, g, b}) - std::min({r, g, b}) > 0.05) continue;
      for (int c = 0; c < 3; ++c) {
        smooth.at(c, y, x) = 0.75;
        busy.at(c, y, x) = ((x + y) % 2) ? 0.95 : 0.55;
      }
    }
  const double d_tex = metric_distance(
                           Distance::L2,
                           gram_style_embedding(to_tensor<double>(smooth)),
                           gram_style_embedding(to_tensor<double>(busy)))
                           .item();
  CHECK(d_tex > median);
}

TEST_CASE("attribute_distance: axioms, wraparound, multi-predictor sum") {
  AttributeSpec id{.name = "id", .predictors = {"hu"},
                   .distance = Distance::Cosine};
  AttributeSpec ori{.name = "orientation", .predictors = {"orientation"},
                    .distance = Distance::AxisAngle};
  SceneParams p = flat_scene();
  auto a = img_of(p);
  CHECK(attribute_distance(id, a, a).item() == 0.0);
  CHECK(attribute_distance(ori, a, a).item() == 0.0);

  auto t1 = T::leaf({1}, (ad::ArrayX<double>(1) << 89).finished());
  auto t2 = T::leaf({1}, (ad::ArrayX<double>(1) << -89).finished());
  CHECK(metric_distance(Distance::AxisAngle, t1, t2).item() ==
        doctest::Approx(2.0));

  SceneParams q = flat_scene();
  q.shape_class = 3;
  q.theta = 40;
  auto b = img_of(q);
  AttributeSpec two{.name = "id2", .predictors = {"hu", "gram_style"},
                    .distance = Distance::Cosine};
  const double lhs = attribute_distance(two, a, b).item();
  const double rhs =
      metric_distance(Distance::Cosine, hu_embedding(a), hu_embedding(b))
          .item() +
      metric_distance(Distance::Cosine, gram_style_embedding(a),
                      gram_style_embedding(b))
          .item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));

  // symmetry across all metrics
  for (auto metric : {Distance::L1, Distance::L2, Distance::Cosine}) {
    auto ea = hu_embedding(a), eb = hu_embedding(b);
    CHECK(metric_distance(metric, ea, eb).item() ==
          doctest::Approx(metric_distance(metric, eb, ea).item()).epsilon(1e-12));
  }
}

TEST_CASE("predictor-vs-renderer oracle over random scenes") {
  auto rng = Rng::seeded(99);
  const int n = 300;
  std::vector<double> gt_scale, got_logmass, gt_theta_v, got_theta_v;
  int hu_ok = 0, hu_total = 0;
  std::vector<std::pair<int, T>> hu_pool;
  for (int i = 0; i < n; ++i) {
    const SceneParams p = shapeworld::sample_scene(rng);
    auto img = img_of(p);

    auto c = centroid(img).value();
    CHECK(std::abs(c[0] - p.x) < 0.01);
    CHECK(std::abs(c[1] - p.y) < 0.01);

    const double th = orientation(img).item();
    CHECK(axis_diff(th, p.theta) <= 2.0);

    auto fit = illum_plane(img).value();
    CHECK(std::abs(fit[0] - p.gx) < 0.02);
    CHECK(std::abs(fit[1] - p.gy) < 0.02);
    CHECK(std::abs(fit[2] - p.b0) < 0.02);

    auto col = mean_color(img).value();
    CHECK(std::abs(col[0] - p.r) < 0.05);
    CHECK(std::abs(col[1] - p.g) < 0.05);
    CHECK(std::abs(col[2] - p.b) < 0.05);

    gt_scale.push_back(p.scale);
    got_logmass.push_back(log_mass(img).item());
    gt_theta_v.push_back(p.theta);
    got_theta_v.push_back(th);
    if (i < 100) hu_pool.emplace_back(p.shape_class, hu_embedding(img));
  }

  // Hu separation: same-class < cross-class in >= 99% of comparisons
  for (std::size_t i = 0; i < hu_pool.size(); ++i) {
    double same_min = 1e18;
    bool has_same = false;
    std::vector<double> crosses;
    for (std::size_t j = 0; j < hu_pool.size(); ++j) {
      if (i == j) continue;
      const double d = metric_distance(Distance::Cosine, hu_pool[i].second,
                                       hu_pool[j].second)
                           .item();
      if (hu_pool[i].first == hu_pool[j].first) {
        same_min = std::min(same_min, d);
        has_same = true;
      } else {
        crosses.push_back(d);
      }
    }
    if (!has_same) continue;
    for (double d : crosses) {
      ++hu_total;
      if (same_min < d) ++hu_ok;
    }
  }
  CHECK(double(hu_ok) / hu_total >= 0.99);

  CHECK(spearman(gt_scale, got_logmass) >= 0.99);
  CHECK(spearman(gt_theta_v, got_theta_v) >= 0.99);
}

TEST_CASE("predictor gradients match finite differences") {
  auto rng = Rng::seeded(1234);
  std::vector<int> probe;  // pixel subset, spread across the image
  for (int i = 0; i < 40; ++i) probe.push_back(int(rng.uniform_int(3 * 32 * 32)));
  const std::vector<std::vector<int>> subsets{probe};

  for (int trial = 0; trial < 4; ++trial) {
    SceneParams p = shapeworld::sample_scene(rng);
    if (std::abs(p.theta) > 80) p.theta = 40;  // keep away from the axis wrap
    auto leaf = to_tensor<double>(render(p, 32), /*requires_grad=*/true);

    auto probe_vec = [&](const std::string& id) {
      auto out = predict<double>(id, leaf);
      ad::ArrayX<double> dir(out.numel());
      auto r2 = Rng::seeded(55 + trial);
      for (Eigen::Index i = 0; i < dir.size(); ++i)
        dir[i] = r2.uniform(-1, 1);
      return ad::dot(out, T::constant(out.dims(), dir));
    };

    for (const char* id : {"centroid", "orientation", "log_mass", "mean_color",
                           "illum_plane", "hu", "gram_style"}) {
      auto f = [&] { return probe_vec(id); };
      const double err = testing::max_grad_rel_err<double>(
          f, {leaf}, 1e-3, 1e-6, &subsets);
      INFO("predictor " << std::string(id));
      CHECK(err < 1e-3);
    }
  }
}
