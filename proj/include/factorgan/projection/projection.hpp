#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "factorgan/config.hpp"
#include "factorgan/core/image.hpp"
#include "factorgan/control/control.hpp"
#include "factorgan/nets/checkpoint.hpp"

namespace fgan::projection {

struct PcaSubspace {
  std::string attribute;
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // rows orthonormal
  double retained = 0.0;       // achieved explained-variance fraction
  int sample_count = 0;
};

using PcaMap = std::map<std::string, PcaSubspace>;

// Per control subspace (id and other excluded): mean plus the minimal
// component count whose explained variance reaches target_var.
PcaMap fit_pca_subspaces(const nets::Model& model, int n, double target_var,
                         std::uint64_t seed);

// PCA of raw sample rows (the building block of fit_pca_subspaces).
PcaSubspace fit_pca(const std::string& attribute,
                    const Eigen::MatrixXd& samples, double target_var);

// w' = mean + C^T C (w - mean); idempotent.
Eigen::VectorXd pca_reproject(const PcaSubspace& sub,
                              const Eigen::VectorXd& w_sub);

void save_pca_map(const std::string& path, const PcaMap& map,
                  const std::string& checkpoint_hash);
PcaMap load_pca_map(const std::string& path,
                    const std::string& expect_checkpoint_hash, bool force);

struct ProjectionResult {
  std::vector<Eigen::VectorXd> id_blocks;     // one per synthesis block
  std::vector<Eigen::VectorXd> other_blocks;  // one per synthesis block
  std::map<std::string, Eigen::VectorXd> controls;
  double best_loss = 0.0;
  std::vector<std::pair<int, double>> trace;  // (iteration, loss)
  std::string checkpoint_hash;
};

void save_projection(const std::string& path, const ProjectionResult& r);
ProjectionResult load_projection(const std::string& path);

// Projected gradient descent on (w+_id, w+_other, PCA-constrained controls)
// minimizing multi-scale pixel MSE; returns the best-loss iterate.
ProjectionResult project_image(const nets::Model& model,
                               const latent::WMeans& means, const PcaMap& pca,
                               const Image<double>& target,
                               const ProjectionConfig& pcfg,
                               const std::vector<predictors::AttributeSpec>&
                                   feature_specs,  // used when feature_term
                               const std::string& checkpoint_hash);

// Regenerates the reconstruction from stored latents.
Image<double> render_projection(const nets::Model& model,
                                const ProjectionResult& r);

// Replaces requested control subvectors with encoder outputs and
// regenerates; id/other cannot be edited through an encoder.
Image<double> edit_projected(
    const nets::Model& model, const ProjectionResult& r,
    const control::EncoderSet& encoders,
    const std::map<std::string, Eigen::VectorXd>& requests,
    ProjectionResult* edited_out = nullptr);

}  // namespace fgan::projection
