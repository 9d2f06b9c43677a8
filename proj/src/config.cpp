#include "factorgan/config.hpp"

#include <cmath>
#include <set>

#include "factorgan/core/hash.hpp"
#include "factorgan/shapeworld/contours.hpp"
#include "factorgan/shapeworld/scene.hpp"

namespace fgan {

namespace {

using io::Json;

// Rejects keys outside the expected set, reporting the JSON path.
void check_keys(const Json& j, const std::string& path,
                const std::set<std::string>& known) {
  if (!j.is_object())
    throw ValidationError("config: " + path + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ValidationError("config: unknown key '" + path + it.key() + "'");
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

std::vector<std::pair<double, double>> default_range(const std::string& name,
                                                     int resolution) {
  using namespace shapeworld;
  if (name == "position")
    return {{kPosLo, kPosHi}, {kPosLo, kPosHi}};
  if (name == "orientation") return {{kThetaLo, kThetaHi}};
  if (name == "scale") {
    // log_mass = log(chroma * area_px), area_px = A_ref/4 * scale^2 * res^2
    const double base = kChroma * ShapeLibrary::instance().area() * 0.25 *
                        double(resolution) * double(resolution);
    return {{std::log(base * kScaleLo * kScaleLo),
             std::log(base * kScaleHi * kScaleHi)}};
  }
  if (name == "color") return {{0, 1}, {0, 1}, {0, 1}};
  if (name == "illum")
    return {{-kIllumSlope, kIllumSlope},
            {-kIllumSlope, kIllumSlope},
            {kBaseLo, kBaseHi}};
  if (name == "id") {
    std::vector<std::pair<double, double>> r(7, {-40.0, 40.0});
    return r;
  }
  if (name == "style") {
    std::vector<std::pair<double, double>> r(36, {-50.0, 50.0});
    return r;
  }
  throw ValidationError("no default interpretable range for attribute '" +
                        name + "'");
}

std::vector<predictors::AttributeSpec> canonical_attributes() {
  using predictors::AttributeSpec;
  using predictors::Distance;
  std::vector<AttributeSpec> out;
  AttributeSpec id;
  id.name = "id";
  id.predictors = {"hu"};
  id.distance = Distance::Cosine;
  // Hu same/cross distributions overlap in their tails at small scales:
  // tau+ at the same-pair bulk, tau- past the 12.5% same-class mass of
  // random pairs (0.9/0.1 would invert).
  id.q_lo = 0.6;
  id.q_hi = 0.35;
  out.push_back(id);

  AttributeSpec pos;
  pos.name = "position";
  pos.predictors = {"centroid"};
  pos.distance = Distance::L2;
  pos.bins = 8;
  out.push_back(pos);

  AttributeSpec ori;
  ori.name = "orientation";
  ori.predictors = {"orientation"};
  ori.distance = Distance::AxisAngle;
  ori.bins = 24;
  out.push_back(ori);

  AttributeSpec sc;
  sc.name = "scale";
  sc.predictors = {"log_mass"};
  sc.distance = Distance::L1;
  sc.bins = 20;
  out.push_back(sc);

  AttributeSpec col;
  col.name = "color";
  col.predictors = {"mean_color"};
  col.distance = Distance::L2;
  col.bins = 8;
  out.push_back(col);

  AttributeSpec il;
  il.name = "illum";
  il.predictors = {"illum_plane"};
  il.distance = Distance::L2;
  il.bins = 5;
  out.push_back(il);
  return out;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json(io::read_json(path));
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  check_keys(j, "", {"seed", "data", "layout", "attributes", "network",
                     "trainer", "encoders", "projection", "eval", "psi"});
  ExperimentConfig c;
  c.seed = get_or<std::uint64_t>(j, "seed", 1);
  c.psi = get_or<double>(j, "psi", 0.7);
  if (!(c.psi >= 0.0 && c.psi <= 1.0))
    throw ValidationError("config: psi must be in [0,1]");

  if (j.contains("data")) {
    const Json& d = j.at("data");
    check_keys(d, "data.", {"n", "resolution"});
    c.data.n = get_or<int>(d, "n", c.data.n);
    c.data.resolution = get_or<int>(d, "resolution", c.data.resolution);
  }
  if (c.data.resolution != 32 && c.data.resolution != 64 &&
      c.data.resolution != 128)
    throw ValidationError("config: data.resolution must be 32, 64 or 128");
  if (c.data.n < 1) throw ValidationError("config: data.n must be >= 1");

  if (!j.contains("layout"))
    throw ValidationError("config: missing 'layout'");
  c.layout = std::make_shared<latent::LatentLayout>(
      latent::LatentLayout::from_json(j.at("layout")));

  // Attributes: defaults by name, with overrides.
  const auto canon = canonical_attributes();
  auto canon_of = [&](const std::string& name)
      -> const predictors::AttributeSpec* {
    for (const auto& a : canon)
      if (a.name == name) return &a;
    return nullptr;
  };
  if (!j.contains("attributes"))
    throw ValidationError("config: missing 'attributes'");
  for (const Json& a : j.at("attributes")) {
    check_keys(a, "attributes[].",
               {"name", "predictors", "distance", "tau_plus", "tau_minus",
                "weight", "q_lo", "q_hi", "bins", "interpretable_range"});
    predictors::AttributeSpec spec;
    const std::string name = a.at("name").get<std::string>();
    if (const auto* base = canon_of(name)) spec = *base;
    spec.name = name;
    if (a.contains("predictors"))
      spec.predictors = a.at("predictors").get<std::vector<std::string>>();
    if (a.contains("distance"))
      spec.distance =
          predictors::distance_from_string(a.at("distance").get<std::string>());
    if (a.contains("tau_plus") || a.contains("tau_minus")) {
      if (!(a.contains("tau_plus") && a.contains("tau_minus")))
        throw ValidationError("config: attribute '" + name +
                              "' must set both thresholds or neither");
      spec.taus_set = true;
      spec.tau_plus = a.at("tau_plus").get<double>();
      spec.tau_minus = a.at("tau_minus").get<double>();
    }
    spec.weight = get_or<double>(a, "weight", spec.weight);
    spec.q_lo = get_or<double>(a, "q_lo", spec.q_lo);
    spec.q_hi = get_or<double>(a, "q_hi", spec.q_hi);
    spec.bins = get_or<int>(a, "bins", spec.bins);
    if (a.contains("interpretable_range")) {
      spec.interpretable_range.clear();
      for (const Json& r : a.at("interpretable_range"))
        spec.interpretable_range.emplace_back(r.at(0).get<double>(),
                                              r.at(1).get<double>());
    } else {
      spec.interpretable_range = default_range(name, c.data.resolution);
    }
    predictors::validate_spec(spec);
    c.attributes.push_back(std::move(spec));
  }

  // Every control subspace needs exactly one attribute spec.
  std::set<std::string> attr_names;
  for (const auto& a : c.attributes)
    if (!attr_names.insert(a.name).second)
      throw ValidationError("config: duplicate attribute '" + a.name + "'");
  for (int k = 0; k < c.layout->num_controls(); ++k)
    if (!attr_names.count(c.layout->sub(k).name))
      throw ValidationError("config: control subspace '" +
                            c.layout->sub(k).name +
                            "' has no attribute spec");

  if (!j.contains("network"))
    throw ValidationError("config: missing 'network'");
  {
    const Json& n = j.at("network");
    check_keys(n, "network.",
               {"gen_channels", "disc_channels", "mapping_depth",
                "mapping_width_min", "noise_inputs"});
    c.gen.resolution = c.data.resolution;
    c.gen.channels = n.at("gen_channels").get<std::vector<int>>();
    c.gen.noise_inputs = get_or<bool>(n, "noise_inputs", false);
    c.gen.validate();
    c.disc.resolution = c.data.resolution;
    c.disc.channels = n.at("disc_channels").get<std::vector<int>>();
    c.disc.validate();
    c.mapping_depth = get_or<int>(n, "mapping_depth", 8);
    c.mapping_width_min = get_or<int>(n, "mapping_width_min", 32);
    if (c.mapping_depth < 1)
      throw ValidationError("config: mapping_depth must be >= 1");
  }

  if (j.contains("trainer")) {
    const Json& t = j.at("trainer");
    check_keys(t, "trainer.",
               {"steps", "lr_g", "lr_d", "beta1", "beta2", "lambda_c",
                "r1_gamma", "r1_interval", "d_batch", "ema_decay",
                "save_interval", "snapshot_interval", "log_interval",
                "patience", "dequantize_reals"});
    auto& tc = c.trainer;
    tc.steps = get_or<std::int64_t>(t, "steps", tc.steps);
    tc.lr_g = get_or<float>(t, "lr_g", tc.lr_g);
    tc.lr_d = get_or<float>(t, "lr_d", tc.lr_d);
    tc.beta1 = get_or<float>(t, "beta1", tc.beta1);
    tc.beta2 = get_or<float>(t, "beta2", tc.beta2);
    tc.lambda_c = get_or<float>(t, "lambda_c", tc.lambda_c);
    tc.r1_gamma = get_or<float>(t, "r1_gamma", tc.r1_gamma);
    tc.r1_interval = get_or<int>(t, "r1_interval", tc.r1_interval);
    tc.d_batch = get_or<int>(t, "d_batch", tc.d_batch);
    tc.ema_decay = get_or<float>(t, "ema_decay", tc.ema_decay);
    tc.save_interval = get_or<int>(t, "save_interval", tc.save_interval);
    tc.snapshot_interval =
        get_or<int>(t, "snapshot_interval", tc.snapshot_interval);
    tc.log_interval = get_or<int>(t, "log_interval", tc.log_interval);
    tc.patience = get_or<int>(t, "patience", tc.patience);
    tc.dequantize_reals =
        get_or<bool>(t, "dequantize_reals", tc.dequantize_reals);
    if (tc.steps < 1) throw ValidationError("config: trainer.steps >= 1");
    if (tc.d_batch < 2) throw ValidationError("config: trainer.d_batch >= 2");
  }

  if (j.contains("encoders")) {
    const Json& e = j.at("encoders");
    check_keys(e, "encoders.",
               {"n_s", "depth", "width", "epochs", "lr", "val_fraction",
                "patience", "batch"});
    auto& ec = c.encoders;
    ec.n_s = get_or<int>(e, "n_s", ec.n_s);
    ec.depth = get_or<int>(e, "depth", ec.depth);
    ec.width = get_or<int>(e, "width", ec.width);
    ec.epochs = get_or<int>(e, "epochs", ec.epochs);
    ec.lr = get_or<float>(e, "lr", ec.lr);
    ec.val_fraction = get_or<double>(e, "val_fraction", ec.val_fraction);
    ec.patience = get_or<int>(e, "patience", ec.patience);
    ec.batch = get_or<int>(e, "batch", ec.batch);
  }

  if (j.contains("projection")) {
    const Json& p = j.at("projection");
    check_keys(p, "projection.",
               {"iters", "lr", "pca_n", "pca_target_var", "feature_term",
                "feature_weight"});
    auto& pc = c.projection;
    pc.iters = get_or<int>(p, "iters", pc.iters);
    pc.lr = get_or<double>(p, "lr", pc.lr);
    pc.pca_n = get_or<int>(p, "pca_n", pc.pca_n);
    pc.pca_target_var = get_or<double>(p, "pca_target_var", pc.pca_target_var);
    pc.feature_term = get_or<bool>(p, "feature_term", pc.feature_term);
    pc.feature_weight = get_or<double>(p, "feature_weight", pc.feature_weight);
  }

  if (j.contains("eval")) {
    const Json& e = j.at("eval");
    check_keys(e, "eval.",
               {"n_precision", "n_id_pairs", "n_matrix", "n_fid", "pool_mode"});
    auto& ev = c.eval;
    ev.n_precision = get_or<int>(e, "n_precision", ev.n_precision);
    ev.n_id_pairs = get_or<int>(e, "n_id_pairs", ev.n_id_pairs);
    ev.n_matrix = get_or<int>(e, "n_matrix", ev.n_matrix);
    ev.n_fid = get_or<int>(e, "n_fid", ev.n_fid);
    ev.pool_mode = get_or<std::string>(e, "pool_mode", ev.pool_mode);
    if (ev.pool_mode != "predicted" && ev.pool_mode != "ground_truth")
      throw ValidationError(
          "config: eval.pool_mode must be 'predicted' or 'ground_truth'");
  }
  return c;
}

io::Json ExperimentConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  j["psi"] = psi;
  j["data"] = {{"n", data.n}, {"resolution", data.resolution}};
  j["layout"] = layout->to_json();
  Json attrs = Json::array();
  for (const auto& a : attributes) {
    Json e;
    e["name"] = a.name;
    e["predictors"] = a.predictors;
    e["distance"] = predictors::distance_to_string(a.distance);
    if (a.taus_set) {
      e["tau_plus"] = a.tau_plus;
      e["tau_minus"] = a.tau_minus;
    }
    e["weight"] = a.weight;
    e["q_lo"] = a.q_lo;
    e["q_hi"] = a.q_hi;
    e["bins"] = a.bins;
    Json rng = Json::array();
    for (const auto& [lo, hi] : a.interpretable_range)
      rng.push_back({lo, hi});
    e["interpretable_range"] = rng;
    attrs.push_back(std::move(e));
  }
  j["attributes"] = attrs;
  j["network"] = {{"gen_channels", gen.channels},
                  {"disc_channels", disc.channels},
                  {"mapping_depth", mapping_depth},
                  {"mapping_width_min", mapping_width_min},
                  {"noise_inputs", gen.noise_inputs}};
  j["trainer"] = {{"steps", trainer.steps},
                  {"lr_g", trainer.lr_g},
                  {"lr_d", trainer.lr_d},
                  {"beta1", trainer.beta1},
                  {"beta2", trainer.beta2},
                  {"lambda_c", trainer.lambda_c},
                  {"r1_gamma", trainer.r1_gamma},
                  {"r1_interval", trainer.r1_interval},
                  {"d_batch", trainer.d_batch},
                  {"ema_decay", trainer.ema_decay},
                  {"save_interval", trainer.save_interval},
                  {"snapshot_interval", trainer.snapshot_interval},
                  {"log_interval", trainer.log_interval},
                  {"patience", trainer.patience},
                  {"dequantize_reals", trainer.dequantize_reals}};
  j["encoders"] = {{"n_s", encoders.n_s},
                   {"depth", encoders.depth},
                   {"width", encoders.width},
                   {"epochs", encoders.epochs},
                   {"lr", encoders.lr},
                   {"val_fraction", encoders.val_fraction},
                   {"patience", encoders.patience},
                   {"batch", encoders.batch}};
  j["projection"] = {{"iters", projection.iters},
                     {"lr", projection.lr},
                     {"pca_n", projection.pca_n},
                     {"pca_target_var", projection.pca_target_var},
                     {"feature_term", projection.feature_term},
                     {"feature_weight", projection.feature_weight}};
  j["eval"] = {{"n_precision", eval.n_precision},
               {"n_id_pairs", eval.n_id_pairs},
               {"n_matrix", eval.n_matrix},
               {"n_fid", eval.n_fid},
               {"pool_mode", eval.pool_mode}};
  return j;
}

std::string ExperimentConfig::hash() const { return io::json_hash(to_json()); }

const predictors::AttributeSpec& ExperimentConfig::attribute(
    const std::string& name) const {
  for (const auto& a : attributes)
    if (a.name == name) return a;
  throw ValidationError("config: no attribute named '" + name + "'");
}

bool ExperimentConfig::thresholds_resolved() const {
  for (const auto& a : attributes)
    if (!a.taus_set) return false;
  return true;
}

}  // namespace fgan
