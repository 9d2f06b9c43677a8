#pragma once

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "factorgan/ad/nn.hpp"
#include "factorgan/ad/ops.hpp"
#include "factorgan/core/common.hpp"

namespace fgan::predictors {

inline constexpr double kMassEpsPerPixel = 1e-3;  // eps_mass = 1e-3 * pixels
inline constexpr double kAnisoEps = 1e-6;         // eps_aniso = 1e-6 * mass^2
inline constexpr double kHuLogScale = 1e6;
inline constexpr double kChromaRef = 0.7;    // domain fill chroma
inline constexpr double kClipKnee = 0.88;    // illum fit ignores near-white
inline constexpr double kClipSlope = 30.0;   // gentle enough for h=1e-3 FD
inline constexpr int kGramFilters = 8;
inline constexpr unsigned kGramSeed = 1234;

enum class Distance { L1, L2, Cosine, AxisAngle };

Distance distance_from_string(const std::string& s);
std::string distance_to_string(Distance d);

struct AttributeSpec {
  std::string name;
  std::vector<std::string> predictors;
  Distance distance = Distance::L2;
  bool taus_set = false;
  double tau_plus = 0.0;
  double tau_minus = 0.0;
  double weight = 1.0;
  // Per output dimension (lo, hi); encoder input validation.
  std::vector<std::pair<double, double>> interpretable_range;
  // Calibration knobs.
  double q_lo = 0.9;
  double q_hi = 0.1;
  int bins = 8;
};

void validate_spec(const AttributeSpec& spec);

// Embedding width of one predictor id; throws on unknown ids.
int predictor_dim(const std::string& id);
// Total embedding width used by an attribute's y-space (first predictor).
int attribute_dim(const AttributeSpec& spec);

// The eight 3x3 style filters: zero-mean, unit-norm, horizontally
// symmetric, frozen from seed 1234.
const std::array<std::array<double, 9>, kGramFilters>& gram_filter_bank();

namespace detail {

template <typename S>
struct CoordCache {
  ad::Tensor<S> x, y, xc, yc, one, xx, xy, yy;  // xc/yc are x-1/2, y-1/2
};

// Pixel-center coordinate constants per resolution.
template <typename S>
const CoordCache<S>& coords(int h, int w) {
  static std::map<std::pair<int, int>, CoordCache<S>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(h, w);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const std::int64_t n = std::int64_t(h) * w;
  ad::ArrayX<S> X(n), Y(n);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      X[std::int64_t(yy) * w + xx] = static_cast<S>((xx + 0.5) / w);
      Y[std::int64_t(yy) * w + xx] = static_cast<S>((yy + 0.5) / h);
    }
  const ad::ArrayX<S> Xc = X - S(0.5);
  const ad::ArrayX<S> Yc = Y - S(0.5);
  CoordCache<S> c;
  c.x = ad::Tensor<S>::constant({int(n)}, X);
  c.y = ad::Tensor<S>::constant({int(n)}, Y);
  c.xc = ad::Tensor<S>::constant({int(n)}, Xc);
  c.yc = ad::Tensor<S>::constant({int(n)}, Yc);
  c.one = ad::Tensor<S>::ones({int(n)});
  c.xx = ad::Tensor<S>::constant({int(n)}, ad::ArrayX<S>(Xc * Xc));
  c.xy = ad::Tensor<S>::constant({int(n)}, ad::ArrayX<S>(Xc * Yc));
  c.yy = ad::Tensor<S>::constant({int(n)}, ad::ArrayX<S>(Yc * Yc));
  return cache.emplace(key, std::move(c)).first->second;
}

template <typename S>
void check_image(const ad::Tensor<S>& img) {
  const auto& d = img.dims();
  if (d.size() != 3 || d[0] != 3)
    throw ValidationError("predictor input must be [3,h,w]");
}

template <typename S>
std::array<ad::Tensor<S>, 3> channels(const ad::Tensor<S>& img) {
  const int hw = img.dims()[1] * img.dims()[2];
  ad::Tensor<S> flat = ad::reshape(img, {3, hw});
  auto chan = [&](int c) {
    return ad::reshape(ad::slice_rows(flat, c, 1), {hw});
  };
  return {chan(0), chan(1), chan(2)};
}

}  // namespace detail

// w_p = max_c(img_p) - min_c(img_p), flattened to [h*w].
template <typename S>
ad::Tensor<S> saturation_weights(const ad::Tensor<S>& img) {
  detail::check_image(img);
  auto [r, g, b] = detail::channels(img);
  ad::Tensor<S> hi = ad::maximum(ad::maximum(r, g), b);
  ad::Tensor<S> lo = ad::minimum(ad::minimum(r, g), b);
  return ad::sub(hi, lo);
}

namespace detail {

template <typename S>
struct MassCheck {
  ad::Tensor<S> w;
  ad::Tensor<S> mass;
};

template <typename S>
MassCheck<S> weights_with_mass(const ad::Tensor<S>& img, const char* op) {
  ad::Tensor<S> w = saturation_weights(img);
  ad::Tensor<S> mass = ad::sum_all(w);
  const double eps = kMassEpsPerPixel * static_cast<double>(w.numel());
  if (!(static_cast<double>(mass.value()[0]) > eps))
    throw DegenerateMass(std::string(op) +
                         ": saturation mass below threshold");
  return {w, mass};
}

}  // namespace detail

namespace detail {

// Sixth-power saturation weights for mean_color: anti-aliased boundary
// pixels mix fill with background, and suppressing them keeps the color
// statistic interior-dominated even for the smallest shapes. Geometry
// predictors keep plain weights (the linear coverage profile encodes
// subpixel edge positions that powering would destroy).
template <typename S>
MassCheck<S> emphasis_weights(const ad::Tensor<S>& img, const char* op) {
  auto mc = weights_with_mass(img, op);
  ad::Tensor<S> w2 = ad::mul(mc.w, mc.w);
  ad::Tensor<S> w = ad::mul(ad::mul(w2, w2), w2);
  return {w, ad::sum_all(w)};
}

}  // namespace detail

// Saturation-weighted centroid, normalized coords -> [2].
template <typename S>
ad::Tensor<S> centroid(const ad::Tensor<S>& img) {
  auto [w, mass] = detail::weights_with_mass(img, "centroid");
  const auto& c = detail::coords<S>(img.dims()[1], img.dims()[2]);
  ad::Tensor<S> inv = ad::reciprocal(mass);
  ad::Tensor<S> cx = ad::mul(ad::dot(w, c.x), inv);
  ad::Tensor<S> cy = ad::mul(ad::dot(w, c.y), inv);
  return ad::concat_rows(std::vector<ad::Tensor<S>>{cx, cy});
}

// Axis angle of the weighted second-moment ellipse, degrees in [-90, 90).
template <typename S>
ad::Tensor<S> orientation(const ad::Tensor<S>& img) {
  auto [w, mass] = detail::weights_with_mass(img, "orientation");
  const auto& c = detail::coords<S>(img.dims()[1], img.dims()[2]);
  ad::Tensor<S> inv = ad::reciprocal(mass);
  ad::Tensor<S> cx = ad::mul(ad::dot(w, c.x), inv);
  ad::Tensor<S> cy = ad::mul(ad::dot(w, c.y), inv);
  ad::Tensor<S> dx = ad::sub(c.x, cx);
  ad::Tensor<S> dy = ad::sub(c.y, cy);
  ad::Tensor<S> mu20 = ad::dot(w, ad::mul(dx, dx));
  ad::Tensor<S> mu02 = ad::dot(w, ad::mul(dy, dy));
  ad::Tensor<S> mu11 = ad::dot(w, ad::mul(dx, dy));

  const double aniso = std::abs(double(mu20.value()[0] - mu02.value()[0])) +
                       std::abs(double(mu11.value()[0]));
  const double m = static_cast<double>(mass.value()[0]);
  if (!(aniso > kAnisoEps * m * m))
    throw DegenerateOrientation("orientation: shape is nearly isotropic");

  ad::Tensor<S> theta =
      ad::mul_scalar(ad::atan2(ad::mul_scalar(mu11, S(2)), ad::sub(mu20, mu02)),
                     S(0.5 * 180.0 / M_PI));
  // atan2 yields (-90, 90]; fold the single boundary point into [-90, 90).
  if (static_cast<double>(theta.value()[0]) >= 90.0)
    theta = ad::add_scalar(theta, S(-180));
  return theta;
}

// log of total saturation mass; monotone in shape area -> [1].
template <typename S>
ad::Tensor<S> log_mass(const ad::Tensor<S>& img) {
  auto [w, mass] = detail::weights_with_mass(img, "log_mass");
  (void)w;
  return ad::log(mass);
}

// Saturation-weighted mean RGB -> [3].
template <typename S>
ad::Tensor<S> mean_color(const ad::Tensor<S>& img) {
  auto [w, mass] = detail::emphasis_weights(img, "mean_color");
  auto [r, g, b] = detail::channels(img);
  ad::Tensor<S> inv = ad::reciprocal(mass);
  std::vector<ad::Tensor<S>> parts{ad::mul(ad::dot(w, r), inv),
                                   ad::mul(ad::dot(w, g), inv),
                                   ad::mul(ad::dot(w, b), inv)};
  return ad::concat_rows(parts);
}

namespace detail {

// Weighted plane fit lum ~ b0 + gx*(x-1/2) + gy*(y-1/2) via the closed-form
// symmetric 3x3 inverse (cofactors), entirely on the tape.
// Returns (gx, gy, b0).
template <typename S>
std::array<ad::Tensor<S>, 3> plane_fit(const ad::Tensor<S>& w,
                                       const ad::Tensor<S>& lum,
                                       const CoordCache<S>& c) {
  ad::Tensor<S> a00 = ad::sum_all(w);
  ad::Tensor<S> a01 = ad::dot(w, c.xc);
  ad::Tensor<S> a02 = ad::dot(w, c.yc);
  ad::Tensor<S> a11 = ad::dot(w, c.xx);
  ad::Tensor<S> a12 = ad::dot(w, c.xy);
  ad::Tensor<S> a22 = ad::dot(w, c.yy);
  ad::Tensor<S> wl = ad::mul(w, lum);
  ad::Tensor<S> r0 = ad::sum_all(wl);
  ad::Tensor<S> r1 = ad::dot(wl, c.xc);
  ad::Tensor<S> r2 = ad::dot(wl, c.yc);

  {
    Eigen::Matrix3d A;
    A << double(a00.value()[0]), double(a01.value()[0]), double(a02.value()[0]),
        double(a01.value()[0]), double(a11.value()[0]), double(a12.value()[0]),
        double(a02.value()[0]), double(a12.value()[0]), double(a22.value()[0]);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
    const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[2];
    if (!(lo > 0.0) || hi / lo > 1e8)
      throw SingularFit("illum_plane: normal matrix is ill-conditioned");
  }

  ad::Tensor<S> c00 = ad::sub(ad::mul(a11, a22), ad::mul(a12, a12));
  ad::Tensor<S> c01 = ad::sub(ad::mul(a02, a12), ad::mul(a01, a22));
  ad::Tensor<S> c02 = ad::sub(ad::mul(a01, a12), ad::mul(a02, a11));
  ad::Tensor<S> c11 = ad::sub(ad::mul(a00, a22), ad::mul(a02, a02));
  ad::Tensor<S> c12 = ad::sub(ad::mul(a01, a02), ad::mul(a00, a12));
  ad::Tensor<S> c22 = ad::sub(ad::mul(a00, a11), ad::mul(a01, a01));
  ad::Tensor<S> det = ad::add(ad::add(ad::mul(a00, c00), ad::mul(a01, c01)),
                              ad::mul(a02, c02));
  ad::Tensor<S> inv_det = ad::reciprocal(det);

  auto solve_row = [&](const ad::Tensor<S>& m0, const ad::Tensor<S>& m1,
                       const ad::Tensor<S>& m2) {
    ad::Tensor<S> s = ad::add(ad::add(ad::mul(m0, r0), ad::mul(m1, r1)),
                              ad::mul(m2, r2));
    return ad::mul(s, inv_det);
  };
  return {solve_row(c01, c11, c12), solve_row(c02, c12, c22),
          solve_row(c00, c01, c02)};
}

}  // namespace detail

// Weighted least-squares plane fit of luminance over background-dominant
// pixels -> (gx, gy, b0). Two passes: the first excludes near-white pixels
// by their own luminance; the second re-weights by the *predicted* plane,
// which removes both the clamp attenuation and the noise-selection bias a
// value-based cutoff would cause.
template <typename S>
ad::Tensor<S> illum_plane(const ad::Tensor<S>& img) {
  detail::check_image(img);
  const auto& c = detail::coords<S>(img.dims()[1], img.dims()[2]);
  auto [r, g, b] = detail::channels(img);
  ad::Tensor<S> lum =
      ad::mul_scalar(ad::add(ad::add(r, g), b), S(1.0 / 3.0));
  // Smooth background gate on normalized saturation. A relu(1 - w/chroma)
  // form would put its kink exactly at the fill chroma every interior pixel
  // lands on, breaking finite-difference checks there.
  ad::Tensor<S> sat_norm =
      ad::mul_scalar(saturation_weights(img), S(1.0 / kChromaRef));
  ad::Tensor<S> wbg = ad::sigmoid(ad::mul_scalar(
      ad::add_scalar(ad::neg(sat_norm), S(0.5)), S(12)));

  ad::Tensor<S> gate1 = ad::sigmoid(ad::mul_scalar(
      ad::add_scalar(ad::neg(lum), S(kClipKnee)), S(kClipSlope)));
  auto fit1 = detail::plane_fit(ad::mul(wbg, gate1), lum, c);

  // Predicted plane; its per-pixel gradients are O(1/N), so a steep gate on
  // it stays finite-difference friendly.
  ad::Tensor<S> pred =
      ad::add(ad::add(ad::mul(fit1[2], c.one), ad::mul(fit1[0], c.xc)),
              ad::mul(fit1[1], c.yc));
  auto refit = [&](const std::array<ad::Tensor<S>, 3>& fit) {
    ad::Tensor<S> pred2 =
        ad::add(ad::add(ad::mul(fit[2], c.one), ad::mul(fit[0], c.xc)),
                ad::mul(fit[1], c.yc));
    ad::Tensor<S> gate = ad::sigmoid(ad::mul_scalar(
        ad::add_scalar(ad::neg(pred2), S(0.96)), S(150)));
    return detail::plane_fit(ad::mul(wbg, gate), lum, c);
  };
  auto fit2 = refit(refit(fit1));
  return ad::concat_rows(
      std::vector<ad::Tensor<S>>{fit2[0], fit2[1], fit2[2]});
}

// Seven log-scaled Hu moment invariants of the saturation map -> [7].
// Moments are taken in pixel units (the classical convention): the eta
// normalization is scale-free either way, but pixel units put the raw
// invariants in the range the 1e6 log scaling expects.
template <typename S>
ad::Tensor<S> hu_embedding(const ad::Tensor<S>& img) {
  auto [w, mass] = detail::weights_with_mass(img, "hu_embedding");
  const auto& c = detail::coords<S>(img.dims()[1], img.dims()[2]);
  ad::Tensor<S> inv = ad::reciprocal(mass);
  ad::Tensor<S> px = ad::mul_scalar(c.x, S(img.dims()[2]));
  ad::Tensor<S> py = ad::mul_scalar(c.y, S(img.dims()[1]));
  ad::Tensor<S> cx = ad::mul(ad::dot(w, px), inv);
  ad::Tensor<S> cy = ad::mul(ad::dot(w, py), inv);
  ad::Tensor<S> dx = ad::sub(px, cx);
  ad::Tensor<S> dy = ad::sub(py, cy);

  auto mu = [&](int p, int q) {
    ad::Tensor<S> t = w;
    for (int i = 0; i < p; ++i) t = ad::mul(t, dx);
    for (int i = 0; i < q; ++i) t = ad::mul(t, dy);
    return ad::sum_all(t);
  };
  // eta_pq = mu_pq / mass^(1 + (p+q)/2)
  ad::Tensor<S> m2 = ad::reciprocal(ad::mul(mass, mass));
  ad::Tensor<S> m25 = ad::mul(m2, ad::reciprocal(ad::sqrt(mass)));
  ad::Tensor<S> m3 = ad::mul(m2, ad::reciprocal(mass));
  ad::Tensor<S> n20 = ad::mul(mu(2, 0), m2);
  ad::Tensor<S> n02 = ad::mul(mu(0, 2), m2);
  ad::Tensor<S> n11 = ad::mul(mu(1, 1), m2);
  ad::Tensor<S> n30 = ad::mul(mu(3, 0), m25);
  ad::Tensor<S> n03 = ad::mul(mu(0, 3), m25);
  ad::Tensor<S> n21 = ad::mul(mu(2, 1), m25);
  ad::Tensor<S> n12 = ad::mul(mu(1, 2), m25);
  (void)m3;

  auto sq = [](const ad::Tensor<S>& t) { return ad::mul(t, t); };
  ad::Tensor<S> p = ad::add(n30, n12);   // (n30 + n12)
  ad::Tensor<S> q = ad::add(n21, n03);   // (n21 + n03)
  ad::Tensor<S> u = ad::sub(n30, ad::mul_scalar(n12, S(3)));  // n30 - 3 n12
  ad::Tensor<S> v = ad::sub(ad::mul_scalar(n21, S(3)), n03);  // 3 n21 - n03
  ad::Tensor<S> d20 = ad::sub(n20, n02);

  ad::Tensor<S> i1 = ad::add(n20, n02);
  ad::Tensor<S> i2 = ad::add(sq(d20), ad::mul_scalar(sq(n11), S(4)));
  ad::Tensor<S> i3 = ad::add(sq(u), sq(v));
  ad::Tensor<S> i4 = ad::add(sq(p), sq(q));
  ad::Tensor<S> pp3qq = ad::sub(sq(p), ad::mul_scalar(sq(q), S(3)));
  ad::Tensor<S> ppq3 = ad::sub(ad::mul_scalar(sq(p), S(3)), sq(q));
  ad::Tensor<S> i5 = ad::add(ad::mul(ad::mul(u, p), pp3qq),
                             ad::mul(ad::mul(v, q), ppq3));
  ad::Tensor<S> i6 = ad::add(ad::mul(d20, ad::sub(sq(p), sq(q))),
                             ad::mul_scalar(ad::mul(ad::mul(n11, p), q), S(4)));
  ad::Tensor<S> i7 = ad::sub(ad::mul(ad::mul(v, p), pp3qq),
                             ad::mul(ad::mul(u, q), ppq3));

  std::vector<ad::Tensor<S>> parts{i1, i2, i3, i4, i5, i6, i7};
  for (auto& t : parts)
    t = ad::symlog(ad::mul_scalar(t, S(kHuLogScale)));
  return ad::concat_rows(parts);
}

namespace detail {

ad::IndexPlanPtr upper_triangle_plan(int n);

template <typename S>
const ad::Tensor<S>& gram_weight_tensor() {
  static const ad::Tensor<S> w = [] {
    const auto& bank = gram_filter_bank();
    ad::ArrayX<S> v(9 * kGramFilters);
    for (int f = 0; f < kGramFilters; ++f)
      for (int i = 0; i < 9; ++i)
        v[std::int64_t(i) * kGramFilters + f] = static_cast<S>(bank[f][i]);
    return ad::Tensor<S>::constant({9, kGramFilters}, v);
  }();
  return w;
}

}  // namespace detail

// Upper triangle of the Gram matrix of 8 fixed filter responses on
// luminance, normalized by pixel count -> [36].
template <typename S>
ad::Tensor<S> gram_style_embedding(const ad::Tensor<S>& img) {
  detail::check_image(img);
  const int h = img.dims()[1], w = img.dims()[2];
  auto [r, g, b] = detail::channels(img);
  ad::Tensor<S> lum =
      ad::mul_scalar(ad::add(ad::add(r, g), b), S(1.0 / 3.0));
  ad::Tensor<S> x = ad::reshape(lum, {1, 1, h, w});
  ad::Tensor<S> zero_bias = ad::Tensor<S>::zeros({kGramFilters});
  ad::Tensor<S> resp =
      ad::conv2d(x, detail::gram_weight_tensor<S>(), zero_bias, 3);
  ad::Tensor<S> rows = ad::reshape(resp, {kGramFilters, h * w});
  ad::Tensor<S> gram = ad::mul_scalar(ad::matmul(rows, ad::transpose(rows)),
                                      S(1.0 / double(h * w)));
  return ad::gather(ad::reshape(gram, {kGramFilters * kGramFilters}),
                    detail::upper_triangle_plan(kGramFilters));
}

// ---------------------------------------------------------------------------

template <typename S>
ad::Tensor<S> predict(const std::string& id, const ad::Tensor<S>& img) {
  if (id == "hu") return hu_embedding(img);
  if (id == "centroid") return centroid(img);
  if (id == "orientation") return orientation(img);
  if (id == "log_mass") return log_mass(img);
  if (id == "mean_color") return mean_color(img);
  if (id == "illum_plane") return illum_plane(img);
  if (id == "gram_style") return gram_style_embedding(img);
  throw ValidationError("unknown predictor id: " + id);
}

template <typename S>
ad::Tensor<S> metric_distance(Distance metric, const ad::Tensor<S>& a,
                              const ad::Tensor<S>& b) {
  ad::check_same_numel(a, b, "metric_distance");
  switch (metric) {
    case Distance::L1:
      return ad::sum_all(ad::abs(ad::sub(a, b)));
    case Distance::L2:
      return ad::sqrt(ad::sum_squares(ad::sub(a, b)));
    case Distance::Cosine: {
      const double na = std::sqrt(double(
          (a.value() * a.value()).sum()));
      const double nb = std::sqrt(double(
          (b.value() * b.value()).sum()));
      if (!(na > 0.0) || !(nb > 0.0))
        throw ValidationError("cosine distance on a zero embedding");
      ad::Tensor<S> denom =
          ad::mul(ad::sqrt(ad::sum_squares(a)), ad::sqrt(ad::sum_squares(b)));
      ad::Tensor<S> d = ad::add_scalar(
          ad::neg(ad::mul(ad::dot(a, b), ad::reciprocal(denom))), S(1));
      // Bitwise-equal embeddings must yield exactly zero (the sqrt/divide
      // round-trip otherwise leaves +-2eps); the true gradient there is 0.
      if (a.numel() == b.numel() && (a.value() == b.value()).all())
        return ad::mul_scalar(d, S(0));
      return d;
    }
    case Distance::AxisAngle: {
      if (a.numel() != 1)
        throw ValidationError("axis-angle distance needs 1-D embeddings");
      ad::Tensor<S> d = ad::abs(ad::sub(a, b));
      return ad::minimum(d, ad::add_scalar(ad::neg(d), S(180)));
    }
  }
  throw ValidationError("unhandled distance metric");
}

// Sum over the spec's predictors of the configured metric. Predictor error
// branches are rethrown tagged with the attribute name.
template <typename S>
ad::Tensor<S> attribute_distance(const AttributeSpec& spec,
                                 const ad::Tensor<S>& img_a,
                                 const ad::Tensor<S>& img_b) {
  validate_spec(spec);
  ad::Tensor<S> total;
  for (const auto& id : spec.predictors) {
    try {
      ad::Tensor<S> d =
          metric_distance(spec.distance, predict<S>(id, img_a),
                          predict<S>(id, img_b));
      total = total.defined() ? ad::add(total, d) : d;
    } catch (const PredictorError& e) {
      throw PredictorError(e.kind(),
                           "attribute '" + spec.name + "': " + e.what());
    }
  }
  return total;
}

}  // namespace fgan::predictors
