#include "factorgan/control/control.hpp"

#include <algorithm>
#include <filesystem>

#include "factorgan/io/bundle.hpp"
#include "factorgan/shapeworld/render.hpp"

namespace fgan::control {

namespace {

using ad::Tensor;
using Tf = Tensor<float>;

Tf z_tensor(const std::vector<latent::FactorizedVector>& zs) {
  const int n = static_cast<int>(zs.size());
  const int d = static_cast<int>(zs[0].flat.size());
  ad::ArrayX<float> v(std::int64_t(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      v[std::int64_t(i) * d + j] = static_cast<float>(zs[i].flat[j]);
  return Tf::constant({n, d}, std::move(v));
}

Eigen::VectorXd to_vec(const ad::ArrayX<float>& a) {
  Eigen::VectorXd v(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) v[i] = a[i];
  return v;
}

}  // namespace

ControlDataset synthesize_control_dataset(
    const nets::Model& model, const predictors::AttributeSpec& spec, int n_s,
    std::uint64_t seed, const std::string& checkpoint_hash) {
  predictors::validate_spec(spec);
  if (n_s < 1000)
    throw ValidationError("synthesize_control_dataset: N_s must be >= 1000");
  if (!model.layout->has(spec.name))
    throw ValidationError("attribute '" + spec.name +
                          "' is not a layout subspace");
  const int k = model.layout->index_of(spec.name);
  const int w_dim = model.layout->sub(k).w_dim;
  const int y_dim = predictors::attribute_dim(spec);

  ControlDataset ds;
  ds.attribute = spec.name;
  ds.checkpoint_hash = checkpoint_hash;
  ds.n_s = n_s;
  ds.seed = seed;
  ds.w.resize(n_s, w_dim);
  ds.y.resize(n_s, y_dim);

  Rng rng = Rng::seeded(seed).derive("control_dataset." + spec.name);
  ad::NoGradGuard ng;
  const int chunk = 32;
  int kept = 0;
  for (int done = 0; done < n_s; done += chunk) {
    const int m = std::min(chunk, n_s - done);
    auto zs = latent::sample_z(model.layout, m, rng);
    Tf w = model.mapping.forward(z_tensor(zs));
    Tf imgs = model.gen.forward(w);
    for (int i = 0; i < m; ++i) {
      Tf img = nets::batch_image_chw(imgs, i);
      try {
        Tf y = predictors::predict<float>(spec.predictors[0], img);
        for (int c = 0; c < y_dim; ++c) ds.y(kept, c) = y.value()[c];
        for (int c = 0; c < w_dim; ++c)
          ds.w(kept, c) =
              w.value()[std::int64_t(i) * model.layout->w_dim() +
                        model.layout->w_offset(k) + c];
        ++kept;
      } catch (const PredictorError&) {
        ++ds.dropped;
      }
    }
  }
  ds.w.conservativeResize(kept, w_dim);
  ds.y.conservativeResize(kept, y_dim);
  if (ds.dropped > std::int64_t(0.8 * n_s))
    throw Error("attribute '" + spec.name + "': " +
                std::to_string(ds.dropped) + "/" + std::to_string(n_s) +
                " samples degenerated; model unusable for this attribute");
  ds.drop_warning = ds.dropped > std::int64_t(0.2 * n_s);
  return ds;
}

Eigen::VectorXd NaturalCalibration::natural_to_pred(
    const Eigen::VectorXd& nat) const {
  if (kind == "affine") return a + b.cwiseProduct(nat);
  if (kind == "log_affine")
    return a + b.cwiseProduct(nat.array().log().matrix());
  throw ValidationError("attribute has no natural-unit calibration");
}

Eigen::VectorXd NaturalCalibration::pred_to_natural(
    const Eigen::VectorXd& pred) const {
  if (kind == "affine") return (pred - a).cwiseQuotient(b);
  if (kind == "log_affine")
    return ((pred - a).cwiseQuotient(b)).array().exp().matrix();
  throw ValidationError("attribute has no natural-unit calibration");
}

NaturalCalibration fit_natural_calibration(const std::string& attribute,
                                           int resolution) {
  NaturalCalibration cal;
  const bool log_kind = attribute == "scale";
  if (attribute != "position" && attribute != "orientation" &&
      attribute != "scale" && attribute != "color" && attribute != "illum")
    return cal;  // none

  // Regress predictor output against ground truth over rendered scenes.
  Rng rng = Rng::seeded(20331).derive("natcal." + attribute);
  const int n = 160;
  std::vector<Eigen::VectorXd> gt, pred;
  ad::NoGradGuard ng;
  for (int i = 0; i < n; ++i) {
    const auto p = shapeworld::sample_scene(rng);
    const auto img = to_tensor<double>(shapeworld::render(p, resolution));
    try {
      Eigen::VectorXd g, q;
      if (attribute == "position") {
        g = Eigen::Vector2d(p.x, p.y);
        auto c = predictors::centroid(img).value();
        q = Eigen::Vector2d(c[0], c[1]);
      } else if (attribute == "orientation") {
        g = Eigen::VectorXd::Constant(1, p.theta);
        q = Eigen::VectorXd::Constant(
            1, predictors::orientation(img).item());
      } else if (attribute == "scale") {
        g = Eigen::VectorXd::Constant(1, std::log(p.scale));
        q = Eigen::VectorXd::Constant(1, predictors::log_mass(img).item());
      } else if (attribute == "color") {
        g = Eigen::Vector3d(p.r, p.g, p.b);
        auto c = predictors::mean_color(img).value();
        q = Eigen::Vector3d(c[0], c[1], c[2]);
      } else {
        g = Eigen::Vector3d(p.gx, p.gy, p.b0);
        auto c = predictors::illum_plane(img).value();
        q = Eigen::Vector3d(c[0], c[1], c[2]);
      }
      gt.push_back(g);
      pred.push_back(q);
    } catch (const PredictorError&) {
    }
  }
  if (gt.size() < 32)
    throw Error("natural calibration for '" + attribute +
                "' failed: too many degenerate renders");

  const int dims = static_cast<int>(gt[0].size());
  cal.kind = log_kind ? "log_affine" : "affine";
  cal.a.resize(dims);
  cal.b.resize(dims);
  for (int d = 0; d < dims; ++d) {
    // least squares pred = a + b * gt  (orientation wraps are absent from
    // the fit because pred and gt agree to a couple of degrees)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      sx += gt[i][d];
      sy += pred[i][d];
      sxx += gt[i][d] * gt[i][d];
      sxy += gt[i][d] * pred[i][d];
    }
    const double n_d = static_cast<double>(gt.size());
    const double denom = n_d * sxx - sx * sx;
    cal.b[d] = denom != 0 ? (n_d * sxy - sx * sy) / denom : 1.0;
    if (std::abs(cal.b[d]) < 1e-9) cal.b[d] = 1.0;
    cal.a[d] = (sy - cal.b[d] * sx) / n_d;
  }
  return cal;
}

Eigen::VectorXd ControlEncoder::predict_w(const Eigen::VectorXd& y) const {
  if (y.size() != y_dim)
    throw ValidationError("encoder '" + attribute + "': expected " +
                          std::to_string(y_dim) + " input dims");
  ad::NoGradGuard ng;
  ad::ArrayX<float> v(y_dim);
  for (int i = 0; i < y_dim; ++i)
    v[i] = static_cast<float>((y[i] - y_mean[i]) / y_std[i]);
  Tf out = net.forward(Tf::constant({1, y_dim}, std::move(v)));
  Eigen::VectorXd w(w_dim);
  for (int i = 0; i < w_dim; ++i)
    w[i] = out.value()[i] * w_std[i] + w_mean[i];
  return w;
}

void ControlEncoder::check_range(const Eigen::VectorXd& y) const {
  if (static_cast<int>(interpretable_range.size()) != y_dim) return;
  for (int i = 0; i < y_dim; ++i) {
    const auto& [lo, hi] = interpretable_range[i];
    if (y[i] < lo || y[i] > hi)
      throw ValidationError(
          "attribute '" + attribute + "' dim " + std::to_string(i) +
          ": value " + std::to_string(y[i]) + " outside [" +
          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

ControlEncoder train_encoder(const ControlDataset& ds,
                             const predictors::AttributeSpec& spec,
                             const EncoderConfig& ecfg, int resolution,
                             std::uint64_t seed) {
  const int n = static_cast<int>(ds.w.rows());
  if (n < 1000)
    throw ValidationError("train_encoder: needs >= 1000 pairs, got " +
                          std::to_string(n));
  ControlEncoder enc;
  enc.attribute = ds.attribute;
  enc.y_dim = static_cast<int>(ds.y.cols());
  enc.w_dim = static_cast<int>(ds.w.cols());
  enc.depth = ecfg.depth;
  enc.width = ecfg.width;
  enc.checkpoint_hash = ds.checkpoint_hash;
  enc.interpretable_range = spec.interpretable_range;
  enc.calibration = fit_natural_calibration(ds.attribute, resolution);

  enc.y_mean = ds.y.colwise().mean();
  enc.w_mean = ds.w.colwise().mean();
  enc.y_std.resize(enc.y_dim);
  enc.w_std.resize(enc.w_dim);
  for (int c = 0; c < enc.y_dim; ++c)
    enc.y_std[c] = std::max(
        1e-8, std::sqrt((ds.y.col(c).array() - enc.y_mean[c]).square().mean()));
  for (int c = 0; c < enc.w_dim; ++c)
    enc.w_std[c] = std::max(
        1e-8, std::sqrt((ds.w.col(c).array() - enc.w_mean[c]).square().mean()));

  // standardized copies, deterministic shuffle, 90/10 split
  Rng rng = Rng::seeded(seed).derive("encoder." + ds.attribute);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  const int n_val = std::max(1, static_cast<int>(n * ecfg.val_fraction));
  const int n_train = n - n_val;

  Eigen::MatrixXf ys(n, enc.y_dim), ws(n, enc.w_dim);
  for (int i = 0; i < n; ++i) {
    const int src = order[i];
    for (int c = 0; c < enc.y_dim; ++c)
      ys(i, c) = float((ds.y(src, c) - enc.y_mean[c]) / enc.y_std[c]);
    for (int c = 0; c < enc.w_dim; ++c)
      ws(i, c) = float((ds.w(src, c) - enc.w_mean[c]) / enc.w_std[c]);
  }

  enc.net = nets::mlp_regressor(enc.params, "enc." + ds.attribute, enc.y_dim,
                                enc.w_dim, ecfg.depth, ecfg.width, rng);
  ad::Adam<float> opt(enc.params.params, ecfg.lr, 0.9f, 0.999f);

  auto eval_mse = [&](int lo, int hi) {
    ad::NoGradGuard ng;
    const int m = hi - lo;
    ad::ArrayX<float> v(std::int64_t(m) * enc.y_dim);
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < enc.y_dim; ++c)
        v[std::int64_t(i) * enc.y_dim + c] = ys(lo + i, c);
    Tf out = enc.net.forward(Tf::constant({m, enc.y_dim}, std::move(v)));
    double mse = 0;
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < enc.w_dim; ++c) {
        const double dlt =
            out.value()[std::int64_t(i) * enc.w_dim + c] - ws(lo + i, c);
        mse += dlt * dlt;
      }
    return mse / (double(m) * enc.w_dim);
  };

  // mean-prediction baseline on the validation split
  {
    Eigen::VectorXf train_mean = ws.topRows(n_train).colwise().mean();
    double mse = 0;
    for (int i = n_train; i < n; ++i)
      for (int c = 0; c < enc.w_dim; ++c) {
        const double dlt = train_mean[c] - ws(i, c);
        mse += dlt * dlt;
      }
    enc.baseline_mse = mse / (double(n_val) * enc.w_dim);
  }

  double best_val = 1e300;
  std::vector<ad::ArrayX<float>> best_params;
  int since_best = 0;
  const int batch = std::min(ecfg.batch, n_train);
  for (int epoch = 0; epoch < ecfg.epochs; ++epoch) {
    for (int off = 0; off + batch <= n_train; off += batch) {
      ad::ArrayX<float> xin(std::int64_t(batch) * enc.y_dim);
      ad::ArrayX<float> tout(std::int64_t(batch) * enc.w_dim);
      for (int i = 0; i < batch; ++i) {
        const int src = off + i;
        for (int c = 0; c < enc.y_dim; ++c)
          xin[std::int64_t(i) * enc.y_dim + c] = ys(src, c);
        for (int c = 0; c < enc.w_dim; ++c)
          tout[std::int64_t(i) * enc.w_dim + c] = ws(src, c);
      }
      opt.zero_grad();
      Tf pred = enc.net.forward(Tf::constant({batch, enc.y_dim}, xin));
      Tf diff = ad::sub(pred, Tf::constant({batch, enc.w_dim}, tout));
      ad::backward(ad::mean_all(ad::mul(diff, diff)));
      opt.step();
    }
    const double val = eval_mse(n_train, n);
    if (val < best_val - 1e-9) {
      best_val = val;
      best_params.clear();
      for (const auto& p : enc.params.params) best_params.push_back(p.value());
      since_best = 0;
    } else if (++since_best > ecfg.patience) {
      break;
    }
  }
  if (!best_params.empty())
    for (std::size_t i = 0; i < enc.params.params.size(); ++i)
      enc.params.params[i].mutable_value() = best_params[i];
  enc.val_mse = best_val;

  // A usable encoder must clearly beat predicting the mean subvector; a
  // constant-y fit lands exactly on the baseline.
  if (!(enc.val_mse < 0.98 * enc.baseline_mse))
    throw Error("attribute '" + ds.attribute +
                "' is not controllable: encoder validation MSE " +
                std::to_string(enc.val_mse) + " never beat the baseline " +
                std::to_string(enc.baseline_mse));
  return enc;
}

namespace {

std::vector<float> vec_to_blob(const Eigen::VectorXd& v) {
  std::vector<float> out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

Eigen::VectorXd blob_to_vec(const std::vector<float>& v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

}  // namespace

void save_encoder(const std::string& path, const ControlEncoder& enc) {
  io::TensorBundle b;
  b.meta["kind"] = "encoder";
  b.meta["attribute"] = enc.attribute;
  b.meta["y_dim"] = enc.y_dim;
  b.meta["w_dim"] = enc.w_dim;
  b.meta["depth"] = enc.depth;
  b.meta["width"] = enc.width;
  b.meta["val_mse"] = enc.val_mse;
  b.meta["baseline_mse"] = enc.baseline_mse;
  b.meta["checkpoint_hash"] = enc.checkpoint_hash;
  io::Json rng_j = io::Json::array();
  for (const auto& [lo, hi] : enc.interpretable_range)
    rng_j.push_back({lo, hi});
  b.meta["interpretable_range"] = rng_j;
  b.meta["calibration"] = {{"kind", enc.calibration.kind}};
  b.blobs.emplace_back("y_mean", vec_to_blob(enc.y_mean));
  b.blobs.emplace_back("y_std", vec_to_blob(enc.y_std));
  b.blobs.emplace_back("w_mean", vec_to_blob(enc.w_mean));
  b.blobs.emplace_back("w_std", vec_to_blob(enc.w_std));
  if (enc.calibration.usable()) {
    b.blobs.emplace_back("cal_a", vec_to_blob(enc.calibration.a));
    b.blobs.emplace_back("cal_b", vec_to_blob(enc.calibration.b));
  }
  for (const auto& p : enc.params.params) {
    std::vector<float> data(p.value().data(),
                            p.value().data() + p.value().size());
    b.blobs.emplace_back("param." + p.name(), std::move(data));
  }
  save_bundle(path, b);
}

ControlEncoder load_encoder(const std::string& path) {
  const io::TensorBundle b = io::load_bundle(path);
  if (b.meta.value("kind", "") != "encoder")
    throw ValidationError(path + " is not an encoder file");
  ControlEncoder enc;
  enc.attribute = b.meta.at("attribute").get<std::string>();
  enc.y_dim = b.meta.at("y_dim").get<int>();
  enc.w_dim = b.meta.at("w_dim").get<int>();
  enc.depth = b.meta.at("depth").get<int>();
  enc.width = b.meta.at("width").get<int>();
  enc.val_mse = b.meta.at("val_mse").get<double>();
  enc.baseline_mse = b.meta.at("baseline_mse").get<double>();
  enc.checkpoint_hash = b.meta.at("checkpoint_hash").get<std::string>();
  for (const auto& r : b.meta.at("interpretable_range"))
    enc.interpretable_range.emplace_back(r.at(0).get<double>(),
                                         r.at(1).get<double>());
  enc.y_mean = blob_to_vec(b.blob("y_mean"));
  enc.y_std = blob_to_vec(b.blob("y_std"));
  enc.w_mean = blob_to_vec(b.blob("w_mean"));
  enc.w_std = blob_to_vec(b.blob("w_std"));
  enc.calibration.kind = b.meta.at("calibration").at("kind").get<std::string>();
  if (enc.calibration.usable()) {
    enc.calibration.a = blob_to_vec(b.blob("cal_a"));
    enc.calibration.b = blob_to_vec(b.blob("cal_b"));
  }
  Rng dummy = Rng::seeded(0);
  enc.net = nets::mlp_regressor(enc.params, "enc." + enc.attribute, enc.y_dim,
                                enc.w_dim, enc.depth, enc.width, dummy);
  for (auto& p : enc.params.params) {
    const auto& blob = b.blob("param." + p.name());
    if (static_cast<std::int64_t>(blob.size()) != p.numel())
      throw ValidationError("encoder blob size mismatch for " + p.name());
    ad::ArrayX<float> v(p.numel());
    for (std::int64_t i = 0; i < p.numel(); ++i)
      v[i] = blob[static_cast<std::size_t>(i)];
    p.mutable_value() = std::move(v);
  }
  return enc;
}

EncoderSet load_encoder_set(const std::string& dir,
                            const std::string& expect_checkpoint_hash,
                            bool force) {
  namespace fs = std::filesystem;
  const io::Json manifest = io::read_json(dir + "/manifest.json");
  if (manifest.value("kind", "") != "encoders")
    throw ValidationError(dir + " is not an encoder directory");
  EncoderSet set;
  for (const auto& [attr, file] :
       manifest.at("encoders").items()) {
    ControlEncoder enc = load_encoder(dir + "/" + file.get<std::string>());
    if (!force && !expect_checkpoint_hash.empty() &&
        enc.checkpoint_hash != expect_checkpoint_hash)
      throw ValidationError(
          "encoder '" + attr + "' was trained against checkpoint " +
          enc.checkpoint_hash + ", not " + expect_checkpoint_hash +
          " (use --force to override)");
    set.emplace(attr, std::move(enc));
  }
  return set;
}

GenResult controlled_generate(
    const nets::Model& model, const latent::WMeans& means,
    const EncoderSet& encoders,
    const std::map<std::string, Eigen::VectorXd>& requests, double psi,
    std::uint64_t seed) {
  std::set<std::string> exempt;
  for (const auto& [name, y] : requests) {
    auto it = encoders.find(name);
    if (it == encoders.end())
      throw ValidationError("no encoder for attribute '" + name + "'");
    it->second.check_range(y);
    exempt.insert(name);
  }

  Rng rng = Rng::seeded(seed).derive("controlled_generate");
  auto zs = latent::sample_z(model.layout, 1, rng);
  latent::FactorizedVector w = model.mapping.map_vector(zs[0]);
  for (const auto& [name, y] : requests) {
    const Eigen::VectorXd wk = encoders.at(name).predict_w(y);
    w.sub(name) = wk;
  }
  w = latent::truncate(w, means, psi, exempt);

  ad::NoGradGuard ng;
  ad::ArrayX<float> wv(w.flat.size());
  for (int i = 0; i < w.flat.size(); ++i)
    wv[i] = static_cast<float>(w.flat[i]);
  Tf img = model.gen.forward(
      Tf::constant({1, int(w.flat.size())}, std::move(wv)));
  GenResult out;
  out.image = nets::batch_image(img, 0);
  out.w = w;
  return out;
}

}  // namespace fgan::control
