#include "factorgan/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "factorgan/config.hpp"
#include "factorgan/core/hash.hpp"
#include "factorgan/evalsuite/evalsuite.hpp"
#include "factorgan/io/montage.hpp"
#include "factorgan/io/png_io.hpp"
#include "factorgan/predictors/calibrate.hpp"
#include "factorgan/projection/projection.hpp"
#include "factorgan/trainer/trainer.hpp"

namespace fgan::cli {

namespace fs = std::filesystem;

namespace {

// The resolved config that produced a checkpoint lives next to it.
ExperimentConfig config_near(const std::string& ckpt_path,
                             const std::string& override_path) {
  if (!override_path.empty())
    return ExperimentConfig::from_file(override_path);
  const fs::path side = fs::path(ckpt_path).parent_path() / "config.json";
  if (!fs::exists(side))
    throw ValidationError("no config.json found next to " + ckpt_path +
                          "; pass --config");
  return ExperimentConfig::from_file(side.string());
}

struct LoadedModel {
  nets::ModelState state;
  nets::Model eval;  // EMA weights
  latent::WMeans means;
  std::string hash;
};

LoadedModel load_eval_model(const std::string& ckpt) {
  LoadedModel m{nets::load_checkpoint(ckpt), {}, {}, hash_file(ckpt)};
  m.eval = nets::ema_model(m.state);
  m.means = nets::checkpoint_w_means(m.state);
  return m;
}

Eigen::VectorXd parse_values(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ValidationError("cannot parse numeric value '" + cell + "'");
    }
  }
  if (vals.empty()) throw ValidationError("empty value list");
  Eigen::VectorXd v(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

struct Request {
  std::string attribute;
  Eigen::VectorXd natural;  // as typed
  Eigen::VectorXd pred;     // predictor space
  bool was_natural = false;
};

std::vector<Request> parse_requests(const std::vector<std::string>& sets,
                                    const control::EncoderSet& encoders,
                                    bool predictor_units) {
  std::vector<Request> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--set expects attr=value, got '" + s + "'");
    Request r;
    r.attribute = s.substr(0, eq);
    r.natural = parse_values(s.substr(eq + 1));
    auto it = encoders.find(r.attribute);
    if (it == encoders.end())
      throw ValidationError("no encoder for attribute '" + r.attribute + "'");
    const auto& cal = it->second.calibration;
    if (!predictor_units && cal.usable()) {
      r.pred = cal.natural_to_pred(r.natural);
      r.was_natural = true;
    } else {
      r.pred = r.natural;
    }
    out.push_back(std::move(r));
  }
  return out;
}

io::Json repredict_json(const ExperimentConfig& cfg, const Image<double>& img) {
  io::Json out = io::Json::object();
  ad::NoGradGuard ng;
  const auto t = to_tensor<double>(img);
  for (const auto& spec : cfg.attributes) {
    try {
      auto e = predictors::predict<double>(spec.predictors[0], t);
      io::Json arr = io::Json::array();
      for (int i = 0; i < e.numel(); ++i) arr.push_back(e.value()[i]);
      out[spec.name] = arr;
    } catch (const PredictorError& err) {
      out[spec.name] = std::string("degenerate: ") + err.kind();
    }
  }
  return out;
}

}  // namespace

void cmd_make_data(const std::string& config, const std::string& out) {
  const auto cfg = ExperimentConfig::from_file(config);
  Rng root = Rng::seeded(cfg.seed);
  shapeworld::make_dataset(cfg.data.n, cfg.data.resolution,
                           root.derive("dataset").bits(), out);
  // stamp the dataset with the producing config
  io::Json m = io::read_json(out + "/manifest.json");
  m["config_hash"] = cfg.hash();
  io::write_json(out + "/manifest.json", m);
  std::cout << "dataset: " << cfg.data.n << " images at "
            << cfg.data.resolution << "x" << cfg.data.resolution << " -> "
            << out << "\n";
}

void cmd_calibrate(const std::string& config, const std::string& data,
                   const std::string& out, int samples) {
  ExperimentConfig cfg = ExperimentConfig::from_file(config);
  const auto ds = shapeworld::Dataset::load(data);
  if (ds.meta.resolution != cfg.data.resolution)
    throw ValidationError("dataset resolution does not match the config");
  Rng root = Rng::seeded(cfg.seed);
  for (auto& spec : cfg.attributes) {
    const auto res = predictors::calibrate_thresholds(
        spec, ds, samples, root.derive("calibrate." + spec.name).bits());
    spec.taus_set = true;
    spec.tau_plus = res.tau_plus;
    spec.tau_minus = res.tau_minus;
    std::cout << spec.name << ": tau+ = " << res.tau_plus
              << "  tau- = " << res.tau_minus << "  (" << res.same_pairs
              << " same / " << res.rand_pairs << " random pairs)\n";
  }
  io::write_json(out, cfg.to_json());
  std::cout << "resolved config -> " << out << "\n";
}

void cmd_train(const std::string& config, const std::string& data,
               const std::string& out, const std::string& resume) {
  const auto cfg = ExperimentConfig::from_file(config);
  const auto ds = shapeworld::Dataset::load(data);
  auto result = trainer::train_phase1(cfg, ds, out, resume);
  std::cout << "trained " << result.final_step << " steps -> "
            << result.checkpoint_path << "\n";
}

void cmd_train_encoders(const std::string& ckpt, const std::string& out,
                        const std::string& config_override) {
  const auto cfg = config_near(ckpt, config_override);
  auto m = load_eval_model(ckpt);

  std::error_code ec;
  fs::create_directories(out, ec);
  Rng root = Rng::seeded(cfg.seed);

  io::Json index = io::Json::object();
  std::map<std::string, std::string> hashes;
  for (const auto& spec : cfg.attributes) {
    const auto ds = control::synthesize_control_dataset(
        m.eval, spec, cfg.encoders.n_s,
        root.derive("control." + spec.name).bits(), m.hash);
    if (ds.drop_warning)
      std::cout << "warning: " << spec.name << " dropped " << ds.dropped
                << "/" << ds.n_s << " degenerate samples\n";
    auto enc = control::train_encoder(ds, spec, cfg.encoders,
                                      cfg.data.resolution,
                                      root.derive("enc." + spec.name).bits());
    const std::string file = "encoder_" + spec.name + ".bin";
    control::save_encoder(out + "/" + file, enc);
    index[spec.name] = file;
    hashes[file] = hash_file(out + "/" + file);
    std::cout << spec.name << ": val mse " << enc.val_mse << " vs baseline "
              << enc.baseline_mse << " (dropped " << ds.dropped << ")\n";
  }

  // PCA subspaces for projection ride along with the encoders
  const auto pca = projection::fit_pca_subspaces(
      m.eval, cfg.projection.pca_n, cfg.projection.pca_target_var,
      root.derive("pca").bits());
  projection::save_pca_map(out + "/pca.bin", pca, m.hash);
  hashes["pca.bin"] = hash_file(out + "/pca.bin");

  io::Json extra;
  extra["encoders"] = index;
  extra["checkpoint_hash"] = m.hash;
  io::write_manifest(out, "encoders", cfg.hash(), hashes, extra);
  std::cout << "encoders -> " << out << "\n";
}

void cmd_generate(const std::string& ckpt, const std::string& encoders,
                  const std::vector<std::string>& sets, std::uint64_t seed,
                  const std::string& out, double psi, bool psi_given,
                  bool predictor_units, bool force) {
  const auto cfg = config_near(ckpt, "");
  auto m = load_eval_model(ckpt);
  control::EncoderSet enc_set =
      encoders.empty() ? control::EncoderSet{}
                       : control::load_encoder_set(encoders, m.hash, force);
  const auto reqs = parse_requests(sets, enc_set, predictor_units);

  std::map<std::string, Eigen::VectorXd> values;
  for (const auto& r : reqs) values[r.attribute] = r.pred;
  const double use_psi = psi_given ? psi : cfg.psi;
  auto res = control::controlled_generate(m.eval, m.means, enc_set, values,
                                          use_psi, seed);
  const auto rgb = to_u8(res.image);
  io::write_png(out, rgb.data(), res.image.res, res.image.res);

  // sidecar: assembled w, request in both unit systems, re-predictions
  io::Json side;
  side["seed"] = seed;
  side["psi"] = use_psi;
  side["checkpoint"] = m.hash;
  side["w"] = io::Json::array();
  for (int i = 0; i < res.w.flat.size(); ++i)
    side["w"].push_back(res.w.flat[i]);
  side["requests"] = io::Json::object();
  for (const auto& r : reqs) {
    io::Json e;
    e["predictor_space"] = io::Json::array();
    for (int i = 0; i < r.pred.size(); ++i)
      e["predictor_space"].push_back(r.pred[i]);
    if (r.was_natural) {
      e["natural"] = io::Json::array();
      for (int i = 0; i < r.natural.size(); ++i)
        e["natural"].push_back(r.natural[i]);
    }
    side["requests"][r.attribute] = e;
  }
  side["repredicted"] = repredict_json(cfg, res.image);
  io::write_json(out + ".json", side);
  std::cout << "image -> " << out << " (+ sidecar .json)\n";
}

void cmd_project(const std::string& ckpt, const std::string& pca,
                 const std::string& img, const std::string& out,
                 const std::string& config_override, bool force) {
  const auto cfg = config_near(ckpt, config_override);
  auto m = load_eval_model(ckpt);
  const auto pca_map = projection::load_pca_map(pca, m.hash, force);

  const auto png = io::read_png(img);
  if (png.width != png.height)
    throw ValidationError("projection target must be square");
  const auto target = from_u8<double>(png.rgb.data(), png.width);

  auto result = projection::project_image(m.eval, m.means, pca_map, target,
                                          cfg.projection, cfg.attributes,
                                          m.hash);
  projection::save_projection(out, result);
  const auto recon = projection::render_projection(m.eval, result);
  const auto rgb = to_u8(recon);
  io::write_png(out + ".png", rgb.data(), recon.res, recon.res);
  std::cout << "projection: best loss " << result.best_loss << " -> " << out
            << " (reconstruction " << out << ".png)\n";
}

void cmd_edit(const std::string& result, const std::string& ckpt,
              const std::string& encoders,
              const std::vector<std::string>& sets, const std::string& out,
              bool predictor_units, bool force) {
  const auto cfg = config_near(ckpt, "");
  auto m = load_eval_model(ckpt);
  auto proj = projection::load_projection(result);
  if (!force && proj.checkpoint_hash != m.hash)
    throw ValidationError(
        "projection result belongs to a different checkpoint (use --force)");
  auto enc_set = control::load_encoder_set(encoders, m.hash, force);
  const auto reqs = parse_requests(sets, enc_set, predictor_units);
  std::map<std::string, Eigen::VectorXd> values;
  for (const auto& r : reqs) values[r.attribute] = r.pred;
  const auto img = projection::edit_projected(m.eval, proj, enc_set, values);
  const auto rgb = to_u8(img);
  io::write_png(out, rgb.data(), img.res, img.res);
  io::Json side;
  side["repredicted"] = repredict_json(cfg, img);
  io::write_json(out + ".json", side);
  std::cout << "edited image -> " << out << "\n";
}

void cmd_evaluate(const std::string& ckpt, const std::string& encoders,
                  const std::string& data, const std::string& out,
                  const std::string& config_override, bool force) {
  const auto cfg = config_near(ckpt, config_override);
  auto m = load_eval_model(ckpt);
  const auto ds = shapeworld::Dataset::load(data);
  auto enc_set = control::load_encoder_set(encoders, m.hash, force);

  std::error_code ec;
  fs::create_directories(out, ec);
  Rng root = Rng::seeded(cfg.seed);
  std::map<std::string, std::string> hashes;

  // control precision
  const auto precision = evalsuite::control_precision(
      m.eval, m.means, enc_set, ds, cfg, cfg.eval.n_precision,
      root.derive("eval.precision").bits());
  {
    io::Json j = io::Json::object();
    for (const auto& [name, s] : precision)
      j[name] = {{"mean", s.mean},         {"median", s.median},
                 {"p90", s.p90},           {"baseline_mean", s.baseline_mean},
                 {"n", s.n},               {"skipped", s.skipped},
                 {"mean_over_baseline", s.mean / s.baseline_mean}};
    for (const auto& spec : cfg.attributes)
      if (!precision.count(spec.name))
        j[spec.name] = "skipped: no encoder";
    io::write_json(out + "/control_precision.json", j);
    hashes["control_precision.json"] =
        hash_file(out + "/control_precision.json");
  }

  // id preservation
  io::Json id_j;
  if (m.eval.layout->has("id")) {
    const auto id = evalsuite::id_preservation(
        m.eval, cfg.eval.n_id_pairs, root.derive("eval.id").bits());
    id_j = {{"same", id.same},
            {"cross", id.cross},
            {"ratio", id.ratio},
            {"n_pairs", id.n_pairs}};
  } else {
    id_j = "skipped: layout has no id subspace";
  }
  io::write_json(out + "/id_preservation.json", id_j);
  hashes["id_preservation.json"] = hash_file(out + "/id_preservation.json");

  // disentanglement matrix
  const auto dis = evalsuite::disentanglement_matrix(
      m.eval, cfg.attributes, cfg.eval.n_matrix,
      root.derive("eval.matrix").bits());
  {
    io::Json j;
    j["attributes"] = dis.attributes;
    io::Json rows = io::Json::array();
    for (int k = 0; k < dis.values.rows(); ++k) {
      io::Json row = io::Json::array();
      for (int r = 0; r < dis.values.cols(); ++r)
        row.push_back(dis.values(k, r));
      rows.push_back(row);
    }
    j["matrix"] = rows;
    j["diag_mean"] = dis.diag_mean;
    j["offdiag_mean"] = dis.offdiag_mean;
    io::write_json(out + "/disentanglement.json", j);
    hashes["disentanglement.json"] = hash_file(out + "/disentanglement.json");
  }

  // attribute frechet distance + split-half reference
  const double fid = evalsuite::attribute_fid(m.eval, ds, cfg.eval.n_fid,
                                              root.derive("eval.fid").bits());
  double split = -1;
  if (ds.size() >= 2 * cfg.eval.n_fid)
    split = evalsuite::attribute_fid_split_half(
        ds, cfg.eval.n_fid, root.derive("eval.fid").bits());
  {
    io::Json j = {{"attribute_fid", fid}, {"split_half_real", split}};
    io::write_json(out + "/attribute_fid.json", j);
    hashes["attribute_fid.json"] = hash_file(out + "/attribute_fid.json");
  }

  // human-readable summary
  {
    std::ofstream md(out + "/summary.md");
    md << "# Evaluation summary\n\n## Control precision\n\n"
       << "| attribute | mean | median | p90 | baseline | ratio |\n"
       << "|---|---|---|---|---|---|\n";
    for (const auto& [name, s] : precision)
      md << "| " << name << " | " << s.mean << " | " << s.median << " | "
         << s.p90 << " | " << s.baseline_mean << " | "
         << s.mean / s.baseline_mean << " |\n";
    md << "\n## ID preservation\n\n" << id_j.dump() << "\n";
    md << "\n## Disentanglement matrix (row = varied, col = measured)\n\n|  |";
    for (const auto& a : dis.attributes) md << " " << a << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < dis.attributes.size(); ++i) md << "---|";
    md << "\n";
    for (int k = 0; k < dis.values.rows(); ++k) {
      md << "| " << dis.attributes[k] << " |";
      for (int r = 0; r < dis.values.cols(); ++r)
        md << " " << dis.values(k, r) << " |";
      md << "\n";
    }
    md << "\n## Attribute Frechet distance\n\nmodel: " << fid
       << "\nsplit-half real: " << split << "\n";
    hashes["summary.md"] = "";
  }
  hashes.erase("summary.md");
  io::write_manifest(out, "report", cfg.hash(), hashes,
                     {{"checkpoint_hash", m.hash}});
  std::cout << "report -> " << out << "\n";
}

void cmd_grid(const std::string& ckpt, const std::string& encoders,
              const std::string& attr, const std::string& values, int seeds,
              const std::string& out, bool predictor_units, bool force) {
  if (seeds < 1) throw ValidationError("--seeds must be >= 1");
  const auto cfg = config_near(ckpt, "");
  auto m = load_eval_model(ckpt);
  auto enc_set = control::load_encoder_set(encoders, m.hash, force);

  std::vector<std::string> value_list;
  {
    std::stringstream ss(values);
    std::string cell;
    while (std::getline(ss, cell, ',')) value_list.push_back(cell);
  }
  if (value_list.empty()) throw ValidationError("--values is empty");

  std::vector<Image<double>> tiles;
  for (const auto& v : value_list) {
    const auto reqs =
        parse_requests({attr + "=" + v}, enc_set, predictor_units);
    for (int s = 0; s < seeds; ++s) {
      auto res = control::controlled_generate(
          m.eval, m.means, enc_set, {{attr, reqs[0].pred}}, cfg.psi,
          cfg.seed + 1000 + s);
      tiles.push_back(res.image);
    }
  }
  io::write_montage_png(out, tiles, seeds);
  std::cout << "grid (" << value_list.size() << " values x " << seeds
            << " seeds) -> " << out << "\n";
}

}  // namespace fgan::cli
