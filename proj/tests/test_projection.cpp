#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "factorgan/projection/projection.hpp"
#include "support/test_config.hpp"

using namespace fgan;
using namespace fgan::projection;
namespace fs = std::filesystem;

namespace {

nets::Model untrained_model(const ExperimentConfig& cfg,
                            std::uint64_t seed = 7) {
  return nets::Model::build(cfg.layout, cfg.gen, cfg.disc, cfg.mapping_depth,
                            cfg.mapping_width_min, seed);
}

latent::WMeans means_of(const nets::Model& model) {
  Rng rng = Rng::seeded(3);
  return latent::subspace_stats(
      [&](const latent::FactorizedVector& z) {
        return model.mapping.map_vector(z);
      },
      model.layout, 1000, rng);
}

Image<double> generate_from(const nets::Model& model,
                            const latent::FactorizedVector& w) {
  ad::NoGradGuard ng;
  ad::ArrayX<float> wv(w.flat.size());
  for (int i = 0; i < w.flat.size(); ++i) wv[i] = float(w.flat[i]);
  auto img = model.gen.forward(
      ad::Tensor<float>::constant({1, int(w.flat.size())}, std::move(wv)));
  const auto& d = img.dims();
  return from_tensor<double>(ad::reshape(img, {d[1], d[2], d[3]}));
}

}  // namespace

TEST_CASE("pca: variance selection, idempotence, scalar-projection oracle") {
  // isotropic Gaussian in d dims: target 0.5 selects ~d/2 components
  Rng rng = Rng::seeded(5);
  const int d = 8, n = 4000;
  Eigen::MatrixXd samples(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) samples(i, c) = rng.normal();
  auto sub = fit_pca("iso", samples, 0.5);
  CHECK(sub.retained >= 0.5);
  const int m = static_cast<int>(sub.components.rows());
  CHECK(m >= d / 2 - 1);
  CHECK(m <= d / 2 + 1);
  // dropping the last component falls below the target
  CHECK(sub.retained - 1.0 / d * 1.35 < 0.5 + 0.12);  // loose sanity
  // orthonormal rows
  Eigen::MatrixXd gram = sub.components * sub.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-6);

  // idempotence and in-subspace identity
  Eigen::VectorXd w(d);
  for (int c = 0; c < d; ++c) w[c] = rng.normal();
  const Eigen::VectorXd p1 = pca_reproject(sub, w);
  const Eigen::VectorXd p2 = pca_reproject(sub, p1);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-7);

  // mean maps to mean
  CHECK((pca_reproject(sub, sub.mean) - sub.mean).cwiseAbs().maxCoeff() <
        1e-9);

  // single-component case equals the scalar projection formula
  Eigen::MatrixXd aniso(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = rng.normal();
    aniso(i, 0) = 3.0 * t;
    aniso(i, 1) = 0.2 * rng.normal();
  }
  auto one = fit_pca("one", aniso, 0.5);
  REQUIRE(one.components.rows() == 1);
  Eigen::VectorXd q(2);
  q << 1.0, 2.0;
  const Eigen::VectorXd dir = one.components.row(0).transpose();
  const Eigen::VectorXd expect =
      one.mean + dir * dir.dot(q - one.mean);
  CHECK((pca_reproject(one, q) - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fit_pca_subspaces: excludes id/other, validates sample count") {
  auto cfg = testing::tiny_config();
  auto model = untrained_model(cfg);
  auto map = fit_pca_subspaces(model, 400, 0.5, 7);
  CHECK(map.count("position") == 1);
  CHECK(map.count("scale") == 1);
  CHECK(map.count("id") == 0);
  CHECK(map.count("other") == 0);
  for (const auto& [name, sub] : map) CHECK(sub.retained >= 0.5);
  CHECK_THROWS_AS(fit_pca_subspaces(model, 20, 0.5, 7), ValidationError);

  // save/load round trip
  const auto path = (fs::temp_directory_path() / "fgan_pca.bin").string();
  save_pca_map(path, map, "fnv64:x");
  auto loaded = load_pca_map(path, "fnv64:x", false);
  CHECK((loaded.at("position").mean - map.at("position").mean)
            .cwiseAbs()
            .maxCoeff() < 1e-6);
  CHECK_THROWS_AS(load_pca_map(path, "fnv64:other", false), ValidationError);
  CHECK_NOTHROW(load_pca_map(path, "fnv64:other", true));
  fs::remove(path);
}

TEST_CASE("project_image: constraint maintenance and monotone best loss") {
  auto cfg = testing::tiny_config();
  cfg.projection.iters = 40;
  auto model = untrained_model(cfg);
  auto means = means_of(model);
  auto pca = fit_pca_subspaces(model, 400, 0.5, 7);

  // target produced by the model itself
  Rng rng = Rng::seeded(9);
  auto zs = latent::sample_z(model.layout, 1, rng);
  auto w_true = model.mapping.map_vector(zs[0]);
  const auto target = generate_from(model, w_true);

  auto result = project_image(model, means, pca, target, cfg.projection,
                              cfg.attributes, "fnv64:x");
  CHECK(result.id_blocks.empty());  // this layout declares no id subspace
  CHECK(result.other_blocks.size() == std::size_t(model.gen.num_blocks()));
  REQUIRE(!result.trace.empty());

  // best loss is the minimum of the trace and improves on the start
  double best = 1e300;
  for (auto& [it, v] : result.trace) best = std::min(best, v);
  CHECK(result.best_loss == doctest::Approx(best));
  CHECK(result.best_loss <= result.trace.front().second);

  // constrained subvectors satisfy the PCA residual invariant
  for (const auto& [name, v] : result.controls) {
    const Eigen::VectorXd re = pca_reproject(pca.at(name), v);
    CHECK((re - v).cwiseAbs().maxCoeff() < 1e-5);
  }

  CHECK_THROWS_AS(project_image(model, means, pca, target,
                                [&] {
                                  auto p = cfg.projection;
                                  p.iters = 0;
                                  return p;
                                }(),
                                cfg.attributes, "fnv64:x"),
                  ValidationError);
}

TEST_CASE("projection round trip and edits") {
  auto cfg = testing::tiny_config();
  cfg.projection.iters = 12;
  auto model = untrained_model(cfg);
  auto means = means_of(model);
  auto pca = fit_pca_subspaces(model, 400, 0.5, 7);

  Rng rng = Rng::seeded(10);
  auto zs = latent::sample_z(model.layout, 1, rng);
  const auto target = generate_from(model, model.mapping.map_vector(zs[0]));
  auto result = project_image(model, means, pca, target, cfg.projection,
                              cfg.attributes, "fnv64:x");

  // serialize and replay without re-optimizing
  const auto path = (fs::temp_directory_path() / "fgan_proj.json").string();
  save_projection(path, result);
  auto loaded = load_projection(path);
  const auto img_a = render_projection(model, result);
  const auto img_b = render_projection(model, loaded);
  CHECK((img_a.data - img_b.data).abs().maxCoeff() < 1e-6);
  fs::remove(path);

  // empty edit reproduces the reconstruction exactly
  control::EncoderSet none;
  const auto img_c = edit_projected(model, result, none, {});
  CHECK((img_c.data == img_a.data).all());

  // id/other cannot be edited through an encoder
  CHECK_THROWS_AS(
      edit_projected(model, result, none,
                     {{"id", Eigen::VectorXd::Zero(7)}}),
      ValidationError);
  CHECK_THROWS_AS(
      edit_projected(model, result, none,
                     {{"position", Eigen::VectorXd::Zero(2)}}),
      ValidationError);  // no encoder available
}
