#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "factorgan/config.hpp"
#include "factorgan/core/image.hpp"
#include "factorgan/control/control.hpp"
#include "factorgan/shapeworld/dataset.hpp"

namespace fgan::evalsuite {

struct PrecisionStat {
  double mean = 0, median = 0, p90 = 0;
  double baseline_mean = 0;
  int n = 0;
  int skipped = 0;
};

// Sample attribute values from the real pool, generate through the encoder,
// re-predict, and measure the error against a random-pairing baseline.
// Attributes without an encoder are skipped (absent from the result).
std::map<std::string, PrecisionStat> control_precision(
    const nets::Model& model, const latent::WMeans& means,
    const control::EncoderSet& encoders, const shapeworld::Dataset& data,
    const ExperimentConfig& cfg, int n, std::uint64_t seed);

struct IdPreservation {
  double same = 0, cross = 0, ratio = 0;
  int n_pairs = 0;
};

// Pairs share z^id with everything else resampled; Hu cosine distance
// within pairs vs across random pairs.
IdPreservation id_preservation(const nets::Model& model, int n_pairs,
                               std::uint64_t seed);

struct DisentanglementMatrix {
  std::vector<std::string> attributes;  // row/column order
  Eigen::MatrixXd values;               // (varied k, measured r)
  double diag_mean = 0, offdiag_mean = 0;
};

// Entry (k, r): mean d_r over pairs differing only in subspace k,
// normalized by the mean d_r over fully independent pairs.
DisentanglementMatrix disentanglement_matrix(
    const nets::Model& model,
    const std::vector<predictors::AttributeSpec>& specs, int n,
    std::uint64_t seed);

// Concatenated predictor features with deterministic fallbacks for
// degenerate inputs; the Frechet metric's embedding space.
Eigen::VectorXd attribute_features(const Image<double>& img);
int attribute_feature_dim();

// Frechet distance between Gaussians fit to jointly-standardized feature
// sets; symmetric in its arguments.
double frechet_distance(const Eigen::MatrixXd& feats_a,
                        const Eigen::MatrixXd& feats_b);

double attribute_fid(const nets::Model& model, const shapeworld::Dataset& data,
                     int n, std::uint64_t seed);

// Real-vs-real split-half value, the near-zero oracle.
double attribute_fid_split_half(const shapeworld::Dataset& data, int n,
                                std::uint64_t seed);

}  // namespace fgan::evalsuite
