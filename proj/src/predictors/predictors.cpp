#include "factorgan/predictors/predictors.hpp"

#include "factorgan/core/rng.hpp"

namespace fgan::predictors {

Distance distance_from_string(const std::string& s) {
  if (s == "L1" || s == "l1") return Distance::L1;
  if (s == "L2" || s == "l2") return Distance::L2;
  if (s == "cosine") return Distance::Cosine;
  if (s == "axis-angle" || s == "axis_angle") return Distance::AxisAngle;
  throw ValidationError("unknown distance metric: " + s);
}

std::string distance_to_string(Distance d) {
  switch (d) {
    case Distance::L1: return "L1";
    case Distance::L2: return "L2";
    case Distance::Cosine: return "cosine";
    case Distance::AxisAngle: return "axis-angle";
  }
  return "?";
}

int predictor_dim(const std::string& id) {
  if (id == "hu") return 7;
  if (id == "centroid") return 2;
  if (id == "orientation") return 1;
  if (id == "log_mass") return 1;
  if (id == "mean_color") return 3;
  if (id == "illum_plane") return 3;
  if (id == "gram_style") return kGramFilters * (kGramFilters + 1) / 2;
  throw ValidationError("unknown predictor id: " + id);
}

int attribute_dim(const AttributeSpec& spec) {
  return predictor_dim(spec.predictors.at(0));
}

void validate_spec(const AttributeSpec& spec) {
  if (spec.name.empty()) throw ValidationError("attribute spec without name");
  if (spec.predictors.empty())
    throw ValidationError("attribute '" + spec.name + "': empty predictors");
  for (const auto& id : spec.predictors) predictor_dim(id);
  if (spec.taus_set) {
    if (!(spec.tau_plus >= 0.0) || !(spec.tau_minus >= 0.0))
      throw ValidationError("attribute '" + spec.name +
                            "': thresholds must be nonnegative");
    if (!(spec.tau_plus < spec.tau_minus))
      throw ValidationError("attribute '" + spec.name +
                            "': requires tau_plus < tau_minus");
  }
  if (spec.distance == Distance::AxisAngle)
    for (const auto& id : spec.predictors)
      if (predictor_dim(id) != 1)
        throw ValidationError("attribute '" + spec.name +
                              "': axis-angle needs 1-D predictors");
}

const std::array<std::array<double, 9>, kGramFilters>& gram_filter_bank() {
  static const auto bank = [] {
    std::array<std::array<double, 9>, kGramFilters> filters{};
    Rng rng = Rng::seeded(kGramSeed);
    for (int f = 0; f < kGramFilters; ++f) {
      std::array<double, 9> k{};
      for (auto& v : k) v = rng.normal();
      // zero mean
      double mean = 0;
      for (double v : k) mean += v;
      for (auto& v : k) v -= mean / 9.0;
      // horizontal symmetry: k(y, x) <- (k(y, x) + k(y, 2-x)) / 2
      for (int y = 0; y < 3; ++y) {
        const double a = k[y * 3 + 0], b = k[y * 3 + 2];
        k[y * 3 + 0] = k[y * 3 + 2] = 0.5 * (a + b);
      }
      double norm = 0;
      for (double v : k) norm += v * v;
      norm = std::sqrt(norm);
      for (auto& v : k) v /= norm;
      filters[f] = k;
    }
    return filters;
  }();
  return bank;
}

namespace detail {

ad::IndexPlanPtr upper_triangle_plan(int n) {
  static std::map<int, ad::IndexPlanPtr> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto plan = std::make_shared<ad::IndexPlan>();
  plan->src_numel = std::int64_t(n) * n;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) plan->idx.push_back(std::int64_t(i) * n + j);
  plan->out_dims = {static_cast<int>(plan->idx.size())};
  cache.emplace(n, plan);
  return plan;
}

}  // namespace detail

}  // namespace fgan::predictors
