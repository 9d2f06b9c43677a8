#include "factorgan/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "factorgan/core/hash.hpp"
#include "factorgan/io/montage.hpp"
#include "factorgan/losses/losses.hpp"

namespace fgan::trainer {

namespace fs = std::filesystem;
using ad::Tensor;
using Tf = Tensor<float>;

RunLock::RunLock(const std::string& dir) : path_(dir + "/lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (fs::exists(path_))
    throw ValidationError("run directory is locked by another run: " + dir);
  std::ofstream out(path_);
  out << "locked\n";
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

Tf z_tensor(const std::vector<latent::FactorizedVector>& zs) {
  const int n = static_cast<int>(zs.size());
  const int d = static_cast<int>(zs[0].flat.size());
  ad::ArrayX<float> v(std::int64_t(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      v[std::int64_t(i) * d + j] = static_cast<float>(zs[i].flat[j]);
  return Tf::constant({n, d}, std::move(v));
}

// Dataset rows are interleaved RGB, which is exactly the channels-last
// tensor layout.
Tf real_batch(const shapeworld::Dataset& data, int count, Rng& rng,
              bool dequantize, bool requires_grad) {
  const int res = data.meta.resolution;
  ad::ArrayX<float> v(std::int64_t(count) * res * res * 3);
  for (int i = 0; i < count; ++i) {
    const int idx = static_cast<int>(rng.uniform_int(data.size()));
    const auto& rgb = data.raw_rgb(idx);
    const std::int64_t base = std::int64_t(i) * res * res * 3;
    for (std::size_t p = 0; p < rgb.size(); ++p) {
      float val = rgb[p] / 255.0f;
      if (dequantize)
        val += static_cast<float>((rng.uniform() - 0.5) / 255.0);
      v[base + std::int64_t(p)] = std::min(1.0f, std::max(0.0f, val));
    }
  }
  return Tf::leaf({count, res, res, 3}, std::move(v), requires_grad);
}

// Append-only CSV; header written once, rows flushed immediately so the log
// stays parseable after an abort.
class MetricsLog {
 public:
  MetricsLog(const std::string& path,
             const std::vector<std::string>& attr_names) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open metrics log: " + path);
    if (fresh) {
      out_ << "step,g_adv,d_real,d_fake,r1,l_c";
      for (const auto& a : attr_names)
        out_ << "," << a << "_pos," << a << "_neg," << a << "_skip";
      out_ << "\n" << std::flush;
    }
  }

  void row(std::int64_t step, double g_adv, double d_real, double d_fake,
           double r1, double lc,
           const std::vector<std::string>& attr_names,
           const std::map<std::string, losses::AttributeTerms>& terms) {
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.8g", v);
      out_ << "," << buf;
    };
    out_ << step;
    num(g_adv);
    num(d_real);
    num(d_fake);
    num(r1);
    num(lc);
    for (const auto& a : attr_names) {
      auto it = terms.find(a);
      if (it == terms.end()) {
        out_ << ",0,0,0";
      } else {
        num(it->second.positive);
        num(it->second.negative);
        out_ << "," << it->second.skipped;
      }
    }
    out_ << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

latent::WMeans ema_w_means(const nets::Model& live,
                           const std::vector<ad::ArrayX<float>>& ema_values,
                           std::uint64_t seed) {
  nets::Model probe = nets::Model::build(
      live.layout, live.gen.config(), live.disc.config(), live.mapping_depth,
      live.mapping_width_min, seed);
  auto params = probe.g_params();
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].mutable_value() = ema_values[i];
  Rng rng = Rng::seeded(seed).derive("w_means");
  return latent::subspace_stats(
      [&](const latent::FactorizedVector& z) {
        return probe.mapping.map_vector(z);
      },
      live.layout, 2000, rng);
}

void snapshot_grid(const nets::Model& live,
                   const std::vector<ad::ArrayX<float>>& ema_values,
                   std::uint64_t seed, const std::string& path) {
  nets::Model probe = nets::Model::build(
      live.layout, live.gen.config(), live.disc.config(), live.mapping_depth,
      live.mapping_width_min, seed);
  auto params = probe.g_params();
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].mutable_value() = ema_values[i];
  Rng rng = Rng::seeded(seed).derive("snapshot_probe");
  auto zs = latent::sample_z(live.layout, 16, rng);
  ad::NoGradGuard ng;
  auto imgs = probe.gen.forward(probe.mapping.forward(z_tensor(zs)));
  std::vector<Image<double>> tiles;
  for (int i = 0; i < imgs.dims()[0]; ++i)
    tiles.push_back(nets::batch_image(imgs, i));
  io::write_montage_png(path, tiles, 4);
}

}  // namespace

SnapshotMetrics evaluate_snapshot(
    const nets::Model& model,
    const std::vector<predictors::AttributeSpec>& specs, int n, Rng& rng) {
  if (n < 64)
    throw ValidationError("evaluate_snapshot: n must be >= 64");
  SnapshotMetrics out;
  const auto layout = model.layout;
  ad::NoGradGuard ng;
  for (const auto& spec : specs) {
    if (!layout->has(spec.name)) continue;
    const int k = layout->index_of(spec.name);
    SnapshotMetrics::Entry e;
    std::int64_t n_same = 0, n_diff = 0;
    const int pairs = n / 2;
    for (int t = 0; t < pairs; ++t) {
      auto zs = latent::sample_z(layout, 3, rng);
      zs[1].sub(k) = zs[0].sub(k);  // shared pair (0,1); (0,2) independent
      auto imgs = model.gen.forward(model.mapping.forward(z_tensor(zs)));
      auto tiles = nets::split_batch_images(imgs);
      auto dist = [&](int i, int j) -> double {
        ad::Tensor<float> d;
        for (const auto& p : spec.predictors) {
          auto di = predictors::metric_distance<float>(
              spec.distance, predictors::predict<float>(p, tiles[i]),
              predictors::predict<float>(p, tiles[j]));
          d = d.defined() ? ad::add(d, di) : di;
        }
        return static_cast<double>(d.item());
      };
      try {
        e.same += dist(0, 1);
        ++n_same;
      } catch (const PredictorError&) {
        ++e.skipped;
      }
      try {
        e.diff += dist(0, 2);
        ++n_diff;
      } catch (const PredictorError&) {
        ++e.skipped;
      }
    }
    if (n_same > 0) e.same /= double(n_same);
    if (n_diff > 0) e.diff /= double(n_diff);
    out.per_attribute[spec.name] = e;
  }
  return out;
}

TrainOutcome train_phase1(const ExperimentConfig& cfg,
                          const shapeworld::Dataset& data,
                          const std::string& out_dir,
                          const std::string& resume_checkpoint) {
  if (!cfg.thresholds_resolved())
    throw ValidationError(
        "training requires calibrated thresholds; run calibrate first");
  if (data.meta.resolution != cfg.data.resolution)
    throw ValidationError("dataset resolution does not match the config");
  if (data.size() < cfg.trainer.d_batch)
    throw ValidationError("dataset smaller than a discriminator batch");

  RunLock lock(out_dir);
  io::write_json(out_dir + "/config.json", cfg.to_json());

  const auto& tc = cfg.trainer;
  const std::string config_hash = cfg.hash();
  Rng root = Rng::seeded(cfg.seed);

  nets::Model model;
  std::vector<ad::ArrayX<float>> ema_values;
  Rng rng = root.derive("train");
  std::int64_t start_step = 0;
  std::vector<ad::ArrayX<float>> g_opt_blobs, d_opt_blobs;
  std::int64_t g_opt_t = 0, d_opt_t = 0;
  const std::uint64_t init_seed = root.derive("model_init").bits();

  if (resume_checkpoint.empty()) {
    model = nets::Model::build(cfg.layout, cfg.gen, cfg.disc,
                               cfg.mapping_depth, cfg.mapping_width_min,
                               init_seed);
    for (const auto& p : model.g_params()) ema_values.push_back(p.value());
  } else {
    nets::ModelState st = nets::load_checkpoint(resume_checkpoint);
    if (st.config_hash != config_hash)
      throw ValidationError(
          "resume checkpoint was produced by a different config");
    model = std::move(st.model);
    ema_values = std::move(st.ema_values);
    rng.restore_state(st.rng_state);
    start_step = st.step;
    g_opt_blobs = std::move(st.g_opt);
    d_opt_blobs = std::move(st.d_opt);
    g_opt_t = st.g_opt_t;
    d_opt_t = st.d_opt_t;
  }

  auto g_params = model.g_params();
  auto d_params = model.d_params();
  ad::Adam<float> g_opt(g_params, tc.lr_g, tc.beta1, tc.beta2);
  ad::Adam<float> d_opt(d_params, tc.lr_d, tc.beta1, tc.beta2);
  if (!g_opt_blobs.empty()) g_opt.import_state(g_opt_blobs, g_opt_t);
  if (!d_opt_blobs.empty()) d_opt.import_state(d_opt_blobs, d_opt_t);
  ad::Ema<float> ema(g_params);
  ema.values() = ema_values;

  std::vector<std::string> attr_names;
  for (const auto& a : cfg.attributes) attr_names.push_back(a.name);
  MetricsLog log(out_dir + "/metrics.csv", attr_names);

  auto save_state = [&](const std::string& path, std::int64_t step) {
    nets::ModelState st;
    st.model = model;
    st.ema_values = ema.values();
    st.step = step;
    st.rng_state = rng.serialize_state();
    st.config_hash = config_hash;
    st.init_seed = init_seed;
    st.g_opt = g_opt.export_state();
    st.d_opt = d_opt.export_state();
    st.g_opt_t = g_opt.step_count();
    st.d_opt_t = d_opt.step_count();
    st.w_means = ema_w_means(model, ema.values(), cfg.seed).flat;
    nets::save_checkpoint(path, st);
  };

  int bad_steps = 0;
  for (std::int64_t step = start_step + 1; step <= tc.steps; ++step) {
    // ---- discriminator update
    d_opt.zero_grad();
    Tf fakes_d;
    {
      ad::NoGradGuard ng;
      auto zs = latent::sample_z(cfg.layout, tc.d_batch, rng);
      fakes_d = model.gen.forward(model.mapping.forward(z_tensor(zs)));
    }
    const bool do_r1 = tc.r1_interval > 0 && step % tc.r1_interval == 0;
    Tf reals = real_batch(data, tc.d_batch, rng, tc.dequantize_reals, do_r1);
    auto d_adv = losses::discriminator_adv_loss(model.disc.forward(reals),
                                                model.disc.forward(fakes_d));
    double r1_val = 0.0;
    Tf d_total = d_adv.total;
    if (do_r1) {
      // lazy regularization: scaled by the interval to keep the effective
      // strength of the penalty
      Tf r1 = ad::mul_scalar(
          losses::r1_penalty(model.disc, reals, tc.r1_gamma),
          float(tc.r1_interval));
      r1_val = r1.item();
      d_total = ad::add(d_total, r1);
    }
    ad::backward(d_total);
    d_opt.step();

    // ---- generator update with the paired batch
    g_opt.zero_grad();
    model.disc.params().zero_grad();
    auto batch = latent::build_batch(cfg.layout, rng);
    latent::validate_batch(batch);
    Tf w = model.mapping.forward(z_tensor(batch.z));
    Tf fakes = model.gen.forward(w);
    Tf g_adv = losses::generator_adv_loss(model.disc.forward(fakes));
    auto lc = losses::contrastive_loss<float>(
        batch, nets::split_batch_images(fakes), cfg.attributes);
    Tf g_total = ad::add(g_adv, ad::mul_scalar(lc.total, tc.lambda_c));
    ad::backward(g_total);
    g_opt.step();
    ema.update(g_params, tc.ema_decay);

    const double gl = g_adv.item(), lcv = lc.total.item();
    const double dr = d_adv.real_term.item(), df = d_adv.fake_term.item();
    const bool finite = std::isfinite(gl) && std::isfinite(lcv) &&
                        std::isfinite(dr) && std::isfinite(df) &&
                        std::isfinite(r1_val);
    bad_steps = finite ? 0 : bad_steps + 1;
    if (bad_steps > tc.patience) {
      save_state(out_dir + "/abort.ckpt", step);
      throw TrainingAborted(
          "non-finite losses for " + std::to_string(bad_steps) +
          " consecutive steps at step " + std::to_string(step) +
          " (g=" + std::to_string(gl) + ", d_real=" + std::to_string(dr) +
          ", d_fake=" + std::to_string(df) + ", l_c=" + std::to_string(lcv) +
          "); state in abort.ckpt");
    }

    if (step % tc.log_interval == 0 || step == tc.steps)
      log.row(step, gl, dr, df, r1_val, lcv, attr_names, lc.per_attribute);
    if (tc.snapshot_interval > 0 && step % tc.snapshot_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "/grid_%08lld.png",
                    static_cast<long long>(step));
      snapshot_grid(model, ema.values(), cfg.seed, out_dir + name);
    }
    if (tc.save_interval > 0 && step % tc.save_interval == 0 &&
        step != tc.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "/step_%08lld.ckpt",
                    static_cast<long long>(step));
      save_state(out_dir + name, step);
    }
  }

  const std::string final_path = out_dir + "/final.ckpt";
  save_state(final_path, tc.steps);
  io::write_manifest(out_dir, "run", config_hash,
                     {{"final.ckpt", hash_file(final_path)},
                      {"metrics.csv", hash_file(out_dir + "/metrics.csv")}});
  return {final_path, tc.steps};
}

}  // namespace fgan::trainer
