#pragma once

// Shared miniature experiment configs for trainer/control/projection tests.

#include <filesystem>

#include "factorgan/config.hpp"
#include "factorgan/shapeworld/dataset.hpp"

namespace fgan::testing {

// Two controls (position, scale) at 32x32 with small nets and hand-set
// thresholds; fast enough for smoke training in unit tests.
inline ExperimentConfig tiny_config(std::int64_t steps = 60) {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.data.n = 96;
  cfg.data.resolution = 32;
  cfg.layout = std::make_shared<latent::LatentLayout>(
      std::vector<latent::SubspaceDef>{
          {"position", 4, 4}, {"scale", 3, 3}, {"other", 6, 6}});

  auto canon = canonical_attributes();
  for (auto& a : canon) {
    if (a.name == "position") {
      a.taus_set = true;
      a.tau_plus = 0.02;
      a.tau_minus = 0.15;
      a.interpretable_range = default_range("position", 32);
      cfg.attributes.push_back(a);
    } else if (a.name == "scale") {
      a.taus_set = true;
      a.tau_plus = 0.05;
      a.tau_minus = 0.5;
      a.interpretable_range = default_range("scale", 32);
      cfg.attributes.push_back(a);
    }
  }

  cfg.gen.resolution = 32;
  cfg.gen.channels = {24, 20, 16, 12};
  cfg.disc.resolution = 32;
  cfg.disc.channels = {12, 16, 20, 24};
  cfg.mapping_depth = 3;
  cfg.mapping_width_min = 16;

  cfg.trainer.steps = steps;
  cfg.trainer.d_batch = 4;
  cfg.trainer.r1_interval = 8;
  cfg.trainer.ema_decay = 0.97f;
  cfg.trainer.save_interval = 0;
  cfg.trainer.snapshot_interval = 0;
  cfg.trainer.log_interval = 5;

  cfg.encoders.n_s = 1200;
  cfg.encoders.epochs = 40;
  cfg.encoders.patience = 10;
  cfg.projection.iters = 60;
  cfg.projection.pca_n = 1500;
  cfg.eval.n_precision = 64;
  cfg.eval.n_id_pairs = 64;
  cfg.eval.n_matrix = 48;
  cfg.eval.n_fid = 96;
  return cfg;
}

// Renders (or reuses) the matching dataset under the system temp dir.
inline shapeworld::Dataset tiny_dataset(const ExperimentConfig& cfg,
                                        const std::string& tag) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / ("fgan_tds_" + tag);
  if (!fs::exists(dir / "manifest.json"))
    shapeworld::make_dataset(cfg.data.n, cfg.data.resolution, cfg.seed,
                             dir.string());
  return shapeworld::Dataset::load(dir.string());
}

}  // namespace fgan::testing
