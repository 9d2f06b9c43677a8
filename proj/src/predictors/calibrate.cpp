#include "factorgan/predictors/calibrate.hpp"

#include <algorithm>
#include <map>
#include <vector>

#include "factorgan/core/parallel.hpp"
#include "factorgan/core/rng.hpp"
#include "factorgan/shapeworld/contours.hpp"

namespace fgan::predictors {

namespace {

using shapeworld::SceneParams;

// Ground-truth values and their declared ranges per attribute, used only
// for same-bin pairing.
struct GtSpec {
  std::vector<double> lo, hi;
  bool discrete = false;
};

GtSpec gt_spec(const std::string& name) {
  using namespace shapeworld;
  if (name == "id") return {{0.0}, {double(shapeworld::kNumClasses)}, true};
  if (name == "position") return {{kPosLo, kPosLo}, {kPosHi, kPosHi}, false};
  if (name == "orientation") return {{kThetaLo}, {kThetaHi}, false};
  if (name == "scale") return {{kScaleLo}, {kScaleHi}, false};
  if (name == "color") return {{0, 0, 0}, {1, 1, 1}, false};
  if (name == "illum")
    return {{-kIllumSlope, -kIllumSlope, kBaseLo},
            {kIllumSlope, kIllumSlope, kBaseHi},
            false};
  throw ValidationError("attribute '" + name +
                        "' has no ground-truth binning for calibration");
}

std::vector<double> gt_values(const std::string& name, const SceneParams& p) {
  if (name == "id") return {double(p.shape_class)};
  if (name == "position") return {p.x, p.y};
  if (name == "orientation") return {p.theta};
  if (name == "scale") return {p.scale};
  if (name == "color") return {p.r, p.g, p.b};
  if (name == "illum") return {p.gx, p.gy, p.b0};
  throw ValidationError("attribute '" + name + "' has no ground truth");
}

std::int64_t bin_key(const GtSpec& gs, const std::vector<double>& v,
                     int bins) {
  std::int64_t key = 0;
  for (std::size_t d = 0; d < v.size(); ++d) {
    int b;
    if (gs.discrete) {
      b = static_cast<int>(v[d]);
    } else {
      const double t = (v[d] - gs.lo[d]) / (gs.hi[d] - gs.lo[d]);
      b = std::clamp(static_cast<int>(t * bins), 0, bins - 1);
    }
    key = key * 4096 + b;
  }
  return key;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double idx = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double t = idx - lo;
  return v[lo] * (1.0 - t) + v[hi] * t;
}

}  // namespace

CalibrationResult calibrate_thresholds(const AttributeSpec& spec,
                                       const shapeworld::Dataset& data,
                                       int max_samples, std::uint64_t seed) {
  validate_spec(spec);
  if (data.size() < 1000)
    throw ValidationError("calibration needs a dataset of >= 1000 samples");
  const int n = std::min<int>(max_samples, data.size());

  // Per-image embeddings for each predictor, double precision, no tape.
  std::vector<std::vector<ad::Tensor<double>>> emb(
      spec.predictors.size(), std::vector<ad::Tensor<double>>(n));
  std::vector<char> ok(n, 1);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    ad::NoGradGuard ng;
    const auto img = to_tensor<double>(data.image(static_cast<int>(i)));
    for (std::size_t p = 0; p < spec.predictors.size(); ++p) {
      try {
        emb[p][i] = predict<double>(spec.predictors[p], img);
      } catch (const PredictorError&) {
        ok[i] = 0;
      }
    }
  });

  auto pair_distance = [&](int i, int j) {
    ad::NoGradGuard ng;
    double d = 0;
    for (std::size_t p = 0; p < spec.predictors.size(); ++p)
      d += metric_distance(spec.distance, emb[p][i], emb[p][j]).item();
    return d;
  };

  // Same-bin pairs.
  const GtSpec gs = gt_spec(spec.name);
  std::map<std::int64_t, std::vector<int>> cells;
  for (int i = 0; i < n; ++i) {
    if (!ok[i]) continue;
    cells[bin_key(gs, gt_values(spec.name, data.params[i]), spec.bins)]
        .push_back(i);
  }
  constexpr std::int64_t kMaxPairs = 6000;
  Rng rng = Rng::seeded(seed);
  std::vector<std::pair<int, int>> same;
  std::int64_t cell_pairs = 0;
  for (const auto& [key, idx] : cells)
    cell_pairs += std::int64_t(idx.size()) * (idx.size() - 1) / 2;
  if (cell_pairs == 0)
    throw ValidationError("attribute '" + spec.name +
                          "': no same-bin pairs; increase samples or widen bins");
  for (const auto& [key, idx] : cells) {
    const std::int64_t here = std::int64_t(idx.size()) * (idx.size() - 1) / 2;
    if (here == 0) continue;
    // Proportional cap per cell keeps the total bounded.
    std::int64_t want = std::min(
        here, std::max<std::int64_t>(1, kMaxPairs * here / cell_pairs));
    if (cell_pairs <= kMaxPairs) {
      for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b)
          same.emplace_back(idx[a], idx[b]);
    } else {
      for (std::int64_t k = 0; k < want; ++k) {
        const int a = idx[rng.uniform_int(idx.size())];
        int b = idx[rng.uniform_int(idx.size())];
        while (b == a) b = idx[rng.uniform_int(idx.size())];
        same.emplace_back(a, b);
      }
    }
  }

  std::vector<double> d_same;
  d_same.reserve(same.size());
  for (auto [i, j] : same) d_same.push_back(pair_distance(i, j));

  std::vector<double> d_rand;
  const std::int64_t n_rand = std::min<std::int64_t>(kMaxPairs, 6000);
  for (std::int64_t k = 0; k < n_rand; ++k) {
    int i = static_cast<int>(rng.uniform_int(n));
    int j = static_cast<int>(rng.uniform_int(n));
    while (j == i || !ok[i] || !ok[j]) {
      i = static_cast<int>(rng.uniform_int(n));
      j = static_cast<int>(rng.uniform_int(n));
    }
    d_rand.push_back(pair_distance(i, j));
  }

  CalibrationResult res;
  res.tau_plus = quantile(d_same, spec.q_lo);
  res.tau_minus = quantile(d_rand, spec.q_hi);
  res.same_pairs = static_cast<std::int64_t>(d_same.size());
  res.rand_pairs = static_cast<std::int64_t>(d_rand.size());
  if (!(res.tau_plus < res.tau_minus))
    throw ThresholdInversion(
        "attribute '" + spec.name + "': tau+ (" +
        std::to_string(res.tau_plus) + ") >= tau- (" +
        std::to_string(res.tau_minus) + "); predictor not discriminative");
  return res;
}

}  // namespace fgan::predictors
