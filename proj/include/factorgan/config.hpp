#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factorgan/latent/latent.hpp"
#include "factorgan/nets/nets.hpp"
#include "factorgan/predictors/predictors.hpp"

namespace fgan {

struct DataConfig {
  int n = 10000;
  int resolution = 64;
};

struct TrainerConfig {
  std::int64_t steps = 60000;
  float lr_g = 2e-3f;
  float lr_d = 2e-3f;
  float beta1 = 0.0f;
  float beta2 = 0.99f;
  float lambda_c = 1.0f;
  float r1_gamma = 1.0f;
  int r1_interval = 16;
  int d_batch = 12;
  float ema_decay = 0.999f;
  int save_interval = 5000;
  int snapshot_interval = 1000;
  int log_interval = 10;
  int patience = 10;
  bool dequantize_reals = true;
};

struct EncoderConfig {
  int n_s = 10000;
  int depth = 4;
  int width = 64;
  int epochs = 200;
  float lr = 1e-3f;
  double val_fraction = 0.1;
  int patience = 20;
  int batch = 256;
};

struct ProjectionConfig {
  int iters = 600;
  double lr = 0.05;
  int pca_n = 10000;
  double pca_target_var = 0.5;
  bool feature_term = false;
  double feature_weight = 0.1;
};

struct EvalConfig {
  int n_precision = 1000;
  int n_id_pairs = 500;
  int n_matrix = 256;
  int n_fid = 2000;
  std::string pool_mode = "predicted";  // or "ground_truth"
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  latent::LayoutPtr layout;
  std::vector<predictors::AttributeSpec> attributes;
  nets::GeneratorConfig gen;
  nets::DiscriminatorConfig disc;
  int mapping_depth = 8;
  int mapping_width_min = 32;
  TrainerConfig trainer;
  EncoderConfig encoders;
  ProjectionConfig projection;
  EvalConfig eval;
  double psi = 0.7;

  // Throws ValidationError on unknown keys (with their path), bad values,
  // or attributes that do not cover the layout's control subspaces.
  static ExperimentConfig from_json(const io::Json& j);
  static ExperimentConfig from_file(const std::string& path);
  io::Json to_json() const;
  std::string hash() const;

  const predictors::AttributeSpec& attribute(const std::string& name) const;
  bool thresholds_resolved() const;
};

// The six canonical ShapeWorld attributes with their default predictors,
// metrics, weights, and calibration knobs (thresholds unresolved).
std::vector<predictors::AttributeSpec> canonical_attributes();

// Interpretable ranges in predictor space for a canonical attribute at a
// given render resolution.
std::vector<std::pair<double, double>> default_range(const std::string& name,
                                                     int resolution);

}  // namespace fgan
