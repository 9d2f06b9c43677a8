#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "factorgan/config.hpp"
#include "factorgan/core/image.hpp"
#include "factorgan/nets/checkpoint.hpp"

namespace fgan::control {

// {(w^k_i, y^k_i)} pairs synthesized from a trained model.
struct ControlDataset {
  std::string attribute;
  Eigen::MatrixXd w;  // [n, w_dim_k]
  Eigen::MatrixXd y;  // [n, D_k]
  std::string checkpoint_hash;
  int n_s = 0;
  std::uint64_t seed = 0;
  std::int64_t dropped = 0;
  bool drop_warning = false;  // set when more than 20% degenerated
};

// y_i = M_k(G(z_i)) with the attribute's first predictor defining y-space.
// Drop fraction > 80% is a hard error (model unusable for this attribute).
ControlDataset synthesize_control_dataset(
    const nets::Model& model, const predictors::AttributeSpec& spec, int n_s,
    std::uint64_t seed, const std::string& checkpoint_hash);

// Affine map between natural units and predictor space, fit against
// renderer ground truth. "log_affine" (scale) maps pred = a + b*log(nat).
struct NaturalCalibration {
  std::string kind = "none";  // none | affine | log_affine
  Eigen::VectorXd a, b;       // per predictor dim

  bool usable() const { return kind != "none"; }
  Eigen::VectorXd natural_to_pred(const Eigen::VectorXd& nat) const;
  Eigen::VectorXd pred_to_natural(const Eigen::VectorXd& pred) const;
};

NaturalCalibration fit_natural_calibration(const std::string& attribute,
                                           int resolution);

struct ControlEncoder {
  std::string attribute;
  int y_dim = 0, w_dim = 0, depth = 4, width = 64;
  ad::ParameterStore<float> params;
  nets::Mlp<float> net;
  Eigen::VectorXd y_mean, y_std, w_mean, w_std;  // standardization
  std::vector<std::pair<double, double>> interpretable_range;
  NaturalCalibration calibration;
  double val_mse = 0;       // on standardized targets
  double baseline_mse = 0;  // predicting the train-mean target
  std::string checkpoint_hash;

  Eigen::VectorXd predict_w(const Eigen::VectorXd& y) const;
  void check_range(const Eigen::VectorXd& y) const;
};

// MSE fit on standardized targets with a 90/10 split and early stopping.
// Errors when validation never beats the mean-prediction baseline.
ControlEncoder train_encoder(const ControlDataset& ds,
                             const predictors::AttributeSpec& spec,
                             const EncoderConfig& ecfg, int resolution,
                             std::uint64_t seed);

void save_encoder(const std::string& path, const ControlEncoder& enc);
ControlEncoder load_encoder(const std::string& path);

// Writes one encoder file per attribute plus a manifest tying them to the
// checkpoint hash; returns the loaded set.
using EncoderSet = std::map<std::string, ControlEncoder>;
EncoderSet load_encoder_set(const std::string& dir,
                            const std::string& expect_checkpoint_hash,
                            bool force);

struct GenResult {
  Image<double> image;
  latent::FactorizedVector w;
};

// Assembles w from encoder outputs for requested attributes and mapped
// prior samples elsewhere; truncation exempts the requested attributes.
GenResult controlled_generate(
    const nets::Model& model, const latent::WMeans& means,
    const EncoderSet& encoders,
    const std::map<std::string, Eigen::VectorXd>& requests, double psi,
    std::uint64_t seed);

}  // namespace fgan::control
