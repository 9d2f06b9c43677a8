#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "factorgan/latent/latent.hpp"

using namespace fgan;
using namespace fgan::latent;

namespace {

LayoutPtr small_layout() {
  return std::make_shared<LatentLayout>(std::vector<SubspaceDef>{
      {"id", 4, 4}, {"pose", 4, 4}, {"other", 8, 8}});
}

LayoutPtr shapeworld_layout() {
  return std::make_shared<LatentLayout>(std::vector<SubspaceDef>{
      {"id", 16, 16}, {"position", 4, 4}, {"orientation", 4, 4},
      {"scale", 4, 4}, {"color", 8, 8}, {"illum", 4, 4}, {"other", 24, 24}});
}

}  // namespace

TEST_CASE("layout validation") {
  CHECK_THROWS_AS(LatentLayout({{"id", 4, 4}}), ValidationError);
  CHECK_THROWS_AS(LatentLayout({{"id", 4, 4}, {"id", 2, 2}, {"other", 4, 4}}),
                  ValidationError);
  CHECK_THROWS_AS(LatentLayout({{"id", 4, 4}, {"pose", 2, 2}}),
                  ValidationError);
  CHECK_THROWS_AS(LatentLayout({{"id", 0, 4}, {"other", 4, 4}}),
                  ValidationError);
  auto l = small_layout();
  CHECK(l->z_dim() == 16);
  CHECK(l->w_dim() == 16);
  CHECK(l->num_controls() == 2);
  CHECK(l->index_of("pose") == 1);
  CHECK_THROWS_AS(l->index_of("nope"), ValidationError);

  auto round = LatentLayout::from_json(l->to_json());
  CHECK(round == *l);
}

TEST_CASE("factorized vector views partition the flat vector") {
  auto l = small_layout();
  auto rng = Rng::seeded(5);
  auto zs = sample_z(l, 1, rng);
  auto& z = zs[0];
  Eigen::VectorXd rebuilt(l->z_dim());
  int off = 0;
  for (int k = 0; k < l->num_subspaces(); ++k) {
    rebuilt.segment(off, z.dim_of(k)) = z.sub(k);
    off += z.dim_of(k);
  }
  CHECK(rebuilt == z.flat);  // bit-exact partition
  CHECK(z.sub("pose").size() == 4);
}

TEST_CASE("sample_z determinism and moments") {
  auto l = small_layout();
  auto r1 = Rng::seeded(77), r2 = Rng::seeded(77);
  auto a = sample_z(l, 3, r1), b = sample_z(l, 3, r2);
  for (int i = 0; i < 3; ++i) CHECK(a[i].flat == b[i].flat);

  auto rng = Rng::seeded(123);
  const int n = 100000 / 16;
  double sum = 0, sq = 0;
  std::int64_t count = 0;
  for (auto& z : sample_z(l, n, rng)) {
    sum += z.flat.sum();
    sq += z.flat.squaredNorm();
    count += z.flat.size();
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var > 0.97);
  CHECK(var < 1.03);

  CHECK_THROWS_AS(sample_z(l, 0, rng), ValidationError);
}

TEST_CASE("build_batch invariants and pair counting") {
  auto l = shapeworld_layout();
  auto rng = Rng::seeded(9);
  auto batch = build_batch(l, rng);
  CHECK(batch.z.size() == 12);  // N_B = 2N
  CHECK(batch.pair_map.size() == 6);
  CHECK_NOTHROW(validate_batch(batch));

  // For the id pair: z_i^id == z_j^id and z_i^pose != z_j^pose.
  const auto& e = batch.pair_map[0];
  CHECK(e.attribute == "id");
  CHECK(batch.z[e.i].sub("id") == batch.z[e.j].sub("id"));
  CHECK(batch.z[e.i].sub("position") != batch.z[e.j].sub("position"));

  // Unordered pair counts per attribute: C+ = 1, C- = NB(NB-1)/2 - 1.
  const int nb = static_cast<int>(batch.z.size());
  for (int k = 0; k < l->num_controls(); ++k) {
    int c_pos = 0, c_neg = 0;
    for (int i = 0; i < nb; ++i)
      for (int j = i + 1; j < nb; ++j)
        (batch.z[i].sub(k) == batch.z[j].sub(k) ? c_pos : c_neg)++;
    CHECK(c_pos == 1);
    CHECK(c_neg == nb * (nb - 1) / 2 - 1);
  }
}

TEST_CASE("batch validator rejects corrupted batches") {
  auto l = small_layout();
  auto rng = Rng::seeded(10);
  auto batch = build_batch(l, rng);
  batch.z[1].sub("id")[0] += 1.0;  // break the shared pair
  CHECK_THROWS_AS(validate_batch(batch), ValidationError);

  auto batch2 = build_batch(l, rng);
  batch2.z[2].sub("id") = batch2.z[0].sub("id");  // extra share
  CHECK_THROWS_AS(validate_batch(batch2), ValidationError);
}

TEST_CASE("subspace_stats identity, constant, and validation") {
  auto l = small_layout();
  auto identity = [&](const FactorizedVector& z) {
    return FactorizedVector(z.layout, Space::W, z.flat);
  };
  auto rng = Rng::seeded(11);
  auto m = subspace_stats(identity, l, 4000, rng);
  for (int i = 0; i < m.flat.size(); ++i)
    CHECK(std::abs(m.flat[i]) < 3.0 / std::sqrt(4000.0));

  Eigen::VectorXd c = Eigen::VectorXd::Constant(l->w_dim(), 2.5);
  auto constant = [&](const FactorizedVector& z) {
    return FactorizedVector(z.layout, Space::W, c);
  };
  auto m2 = subspace_stats(constant, l, 1000, rng);
  CHECK(m2.flat == c);

  CHECK_THROWS_AS(subspace_stats(identity, l, 999, rng), ValidationError);
}

TEST_CASE("truncate formula, exemptions, and errors") {
  auto l = small_layout();
  auto rng = Rng::seeded(12);
  FactorizedVector w(l, Space::W);
  for (int i = 0; i < w.flat.size(); ++i) w.flat[i] = rng.normal();
  WMeans means{l, Eigen::VectorXd::Zero(l->w_dim())};
  for (int i = 0; i < means.flat.size(); ++i) means.flat[i] = rng.normal();

  auto t1 = truncate(w, means, 1.0, {});
  CHECK((t1.flat - w.flat).cwiseAbs().maxCoeff() == 0.0);  // identity

  auto t0 = truncate(w, means, 0.0, {});
  CHECK(t0.flat == means.flat);

  auto t = truncate(w, means, 0.7, {"pose"});
  CHECK(t.sub("pose") == w.sub("pose"));  // exempt passes through
  Eigen::VectorXd expect =
      means.flat.segment(0, 4) + 0.7 * (w.flat.segment(0, 4) -
                                        means.flat.segment(0, 4));
  CHECK((Eigen::VectorXd(t.sub("id")) - expect).cwiseAbs().maxCoeff() < 1e-7);

  CHECK_THROWS_AS(truncate(w, means, 0.7, {"nope"}), ValidationError);
  CHECK_THROWS_AS(truncate(w, means, 1.5, {}), ValidationError);
}
