#pragma once

#include <cstdint>
#include <string>

#include "factorgan/nets/nets.hpp"

namespace fgan::nets {

// Mapping + generator + discriminator with a shared layout; the unit the
// trainer owns and checkpoints describe.
struct Model {
  latent::LayoutPtr layout;
  MappingStack<float> mapping;
  Generator<float> gen;
  Discriminator<float> disc;
  int mapping_depth = 8;
  int mapping_width_min = 32;

  static Model build(const latent::LayoutPtr& layout,
                     const GeneratorConfig& gcfg,
                     const DiscriminatorConfig& dcfg, int mapping_depth,
                     int mapping_width_min, std::uint64_t init_seed);

  // Generator-side parameters (mapping first), the EMA/optimizer order.
  std::vector<ad::Tensor<float>> g_params() const;
  std::vector<ad::Tensor<float>> d_params() const;
};

// Everything a resumed run or an evaluation needs.
struct ModelState {
  Model model;
  std::vector<ad::ArrayX<float>> ema_values;  // aligned with g_params()
  std::int64_t step = 0;
  std::string rng_state;
  std::string config_hash;
  std::uint64_t init_seed = 0;
  Eigen::VectorXd w_means;  // empirical subspace means of the EMA mapping
  // Adam state: [m, v] per parameter, in g_params()/d_params() order.
  std::vector<ad::ArrayX<float>> g_opt, d_opt;
  std::int64_t g_opt_t = 0, d_opt_t = 0;
};

void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path);

// Fresh model with the EMA weights loaded; deterministic given the state.
Model ema_model(const ModelState& state);

latent::WMeans checkpoint_w_means(const ModelState& state);

}  // namespace fgan::nets
