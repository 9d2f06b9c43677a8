#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "factorgan/losses/losses.hpp"
#include "support/contrastive_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace fgan;
using namespace fgan::losses;
using latent::FactorizedVector;
using latent::LatentLayout;
using latent::LayoutPtr;
using latent::Space;
using latent::SubspaceDef;
using predictors::AttributeSpec;
using predictors::Distance;
using T = ad::Tensor<double>;

namespace {

LayoutPtr layout_n(int n_controls) {
  std::vector<SubspaceDef> subs;
  for (int k = 0; k < n_controls; ++k)
    subs.push_back({"c" + std::to_string(k), 2, 2});
  subs.push_back({"other", 3, 3});
  return std::make_shared<LatentLayout>(subs);
}

// Batch with one shared pair per control, deterministic contents.
latent::TrainingBatch batch_for(const LayoutPtr& l, int nb, Rng& rng) {
  latent::TrainingBatch b;
  b.z = latent::sample_z(l, nb, rng);
  for (int k = 0; k < l->num_controls() && 2 * k + 1 < nb; ++k) {
    b.z[2 * k + 1].sub(k) = b.z[2 * k].sub(k);
    b.pair_map.push_back({2 * k, 2 * k + 1, l->sub(k).name});
  }
  return b;
}

T emb_leaf(Rng& rng, int dim, bool requires_grad = false) {
  ad::ArrayX<double> v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.uniform(-2, 2);
  return T::leaf({dim}, std::move(v), requires_grad);
}

AttributeSpec spec_l2(const std::string& name, double tp, double tm,
                      double weight = 1.0) {
  AttributeSpec s;
  s.name = name;
  s.predictors = {"centroid"};  // dims are irrelevant for embedding input
  s.distance = Distance::L2;
  s.taus_set = true;
  s.tau_plus = tp;
  s.tau_minus = tm;
  s.weight = weight;
  return s;
}

}  // namespace

TEST_CASE("hinge dead zones give exactly zero loss and gradient") {
  auto l = layout_n(1);
  auto rng = Rng::seeded(1);
  auto batch = batch_for(l, 4, rng);

  // shared pair at distance < tau+, all different pairs beyond tau-
  std::vector<AttributeEmbeddings<double>> embs(1);
  embs[0].resize(1);
  std::vector<T> leaves;
  for (int i = 0; i < 4; ++i) {
    ad::ArrayX<double> v(2);
    v << 10.0 * i, 0.0;  // pairwise distances >= 10
    leaves.push_back(T::leaf({2}, v, true));
  }
  // make the shared pair's embeddings close (distance 0.05)
  leaves[1].mutable_value() = leaves[0].value();
  leaves[1].mutable_value()[0] += 0.05;
  embs[0][0] = {leaves[0], leaves[1], leaves[2], leaves[3]};

  auto report = contrastive_from_embeddings<double>(
      batch, {spec_l2("c0", 0.5, 5.0)}, embs);
  CHECK(report.total.item() == 0.0);

  for (auto& lf : leaves) lf.zero_grad();
  ad::backward(report.total);
  for (auto& lf : leaves)
    CHECK(lf.grad().abs().maxCoeff() == 0.0);  // exactly zero in dead zones
}

TEST_CASE("single shared pair at d = tau+ + 1 contributes exactly 1") {
  auto l = layout_n(1);
  auto rng = Rng::seeded(2);
  auto batch = batch_for(l, 2, rng);

  std::vector<AttributeEmbeddings<double>> embs(1);
  embs[0].resize(1);
  ad::ArrayX<double> a(1), b(1);
  a << 0.0;
  b << 1.5;  // d = 1.5, tau+ = 0.5
  embs[0][0] = {T::constant({1}, a), T::constant({1}, b)};
  auto report = contrastive_from_embeddings<double>(
      batch, {spec_l2("c0", 0.5, 3.0)}, embs);
  CHECK(report.total.item() == doctest::Approx(1.0));
  CHECK(report.per_attribute.at("c0").pos_pairs == 1);
  CHECK(report.per_attribute.at("c0").neg_pairs == 0);
}

TEST_CASE("matches the brute-force enumeration oracle") {
  auto global = Rng::seeded(42);
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng = global.derive("trial", trial);
    const int n_controls = 1 + int(rng.uniform_int(3));
    const int nb = 2 * n_controls + int(rng.uniform_int(2));
    if (nb > 6) continue;
    auto l = layout_n(n_controls);
    auto batch = batch_for(l, nb, rng);

    std::vector<AttributeSpec> specs;
    std::vector<AttributeEmbeddings<double>> embs;
    std::vector<testing::OracleAttribute> oracle_attrs;
    for (int k = 0; k < n_controls; ++k) {
      const int dim = 1 + int(rng.uniform_int(4));
      AttributeSpec s = spec_l2("c" + std::to_string(k),
                                rng.uniform(0.0, 1.0),
                                1.0 + rng.uniform(0.0, 3.0));
      const int which = int(rng.uniform_int(3));
      s.distance = which == 0 ? Distance::L1
                              : (which == 1 ? Distance::L2 : Distance::Cosine);
      const int n_preds = 1 + int(rng.uniform_int(2));
      s.predictors.assign(n_preds, "centroid");
      specs.push_back(s);

      AttributeEmbeddings<double> ae(n_preds);
      testing::OracleAttribute oa;
      oa.name = s.name;
      oa.subspace = k;
      oa.metric = which == 0 ? "L1" : (which == 1 ? "L2" : "cosine");
      oa.tau_plus = s.tau_plus;
      oa.tau_minus = s.tau_minus;
      oa.emb.resize(n_preds);
      for (int p = 0; p < n_preds; ++p) {
        for (int i = 0; i < nb; ++i) {
          T e = emb_leaf(rng, dim);
          ae[p].push_back(e);
          Eigen::VectorXd ev(dim);
          for (int d = 0; d < dim; ++d) ev[d] = e.value()[d];
          oa.emb[p].push_back(ev);
        }
      }
      embs.push_back(std::move(ae));
      oracle_attrs.push_back(std::move(oa));
    }

    std::vector<std::vector<Eigen::VectorXd>> z(nb);
    for (int i = 0; i < nb; ++i)
      for (int k = 0; k < l->num_subspaces(); ++k)
        z[i].push_back(Eigen::VectorXd(batch.z[i].sub(k)));

    const double expect = testing::contrastive_oracle(z, oracle_attrs);
    const double got =
        contrastive_from_embeddings<double>(batch, specs, embs).total.item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("positive term is a mean: invariant under pair duplication") {
  auto l = layout_n(1);
  auto rng = Rng::seeded(5);

  latent::TrainingBatch b1 = batch_for(l, 2, rng);
  std::vector<AttributeEmbeddings<double>> e1(1);
  e1[0].resize(1);
  ad::ArrayX<double> pa(1), pb(1);
  pa << 0.0;
  pb << 2.0;
  e1[0][0] = {T::constant({1}, pa), T::constant({1}, pb)};
  const double term1 = contrastive_from_embeddings<double>(
                           b1, {spec_l2("c0", 0.5, 9.0)}, e1)
                           .per_attribute.at("c0")
                           .positive;

  // a second shared pair with its own c0 value but identical embeddings
  latent::TrainingBatch b2;
  b2.z = {b1.z[0], b1.z[1], b1.z[0], b1.z[1]};
  b2.z[2].sub("c0")[0] += 1.0;
  b2.z[3].sub("c0") = b2.z[2].sub("c0");
  b2.z[2].sub("other")[0] += 1.0;
  b2.z[3].sub("other")[0] += 2.0;
  b2.pair_map = {{0, 1, "c0"}, {2, 3, "c0"}};
  std::vector<AttributeEmbeddings<double>> e2(1);
  e2[0].resize(1);
  e2[0][0] = {T::constant({1}, pa), T::constant({1}, pb), T::constant({1}, pa),
              T::constant({1}, pb)};
  auto rep2 = contrastive_from_embeddings<double>(
      b2, {spec_l2("c0", 0.5, 9.0)}, e2);
  CHECK(rep2.per_attribute.at("c0").pos_pairs == 2);
  CHECK(rep2.per_attribute.at("c0").positive ==
        doctest::Approx(term1).epsilon(1e-12));
}

TEST_CASE("degenerate embeddings are skipped and counted") {
  auto l = layout_n(1);
  auto rng = Rng::seeded(6);
  auto batch = batch_for(l, 4, rng);
  std::vector<AttributeEmbeddings<double>> embs(1);
  embs[0].resize(1);
  ad::ArrayX<double> v(1);
  v << 1.0;
  embs[0][0] = {T::constant({1}, v), T(), T::constant({1}, v),
                T::constant({1}, v)};  // image 1 degenerate
  auto rep = contrastive_from_embeddings<double>(
      batch, {spec_l2("c0", 0.1, 2.0)}, embs);
  CHECK(rep.per_attribute.at("c0").skipped == 3);  // pairs touching image 1
  CHECK(rep.per_attribute.at("c0").pos_pairs == 0);
  CHECK(rep.per_attribute.at("c0").neg_pairs == 3);
}

TEST_CASE("image-facing wrapper differentiates through predictors") {
  auto l = layout_n(2);
  auto rng = Rng::seeded(7);
  auto batch = batch_for(l, 4, rng);

  // synthetic colorful images, 8x8
  std::vector<T> images;
  for (int i = 0; i < 4; ++i) {
    ad::ArrayX<double> v(3 * 8 * 8);
    for (Eigen::Index p = 0; p < v.size(); ++p) v[p] = rng.uniform(0.1, 0.9);
    images.push_back(T::leaf({3, 8, 8}, std::move(v), true));
  }
  AttributeSpec c0 = spec_l2("c0", 0.001, 0.2);
  c0.predictors = {"centroid"};
  AttributeSpec c1 = spec_l2("c1", 0.001, 0.1);
  c1.predictors = {"log_mass"};
  c1.distance = Distance::L1;

  auto f = [&] {
    return contrastive_loss<double>(batch, images, {c0, c1}).total;
  };
  CHECK(f().item() > 0.0);  // tight thresholds force active hinges
  std::vector<std::vector<int>> subsets;
  for (int i = 0; i < 4; ++i) subsets.push_back({0, 17, 63, 101, 150, 190});
  CHECK(testing::max_grad_rel_err<double>(
            f, images, 1e-4, 1e-8, &subsets) < 1e-3);
}

TEST_CASE("adversarial losses: closed forms") {
  ad::ArrayX<double> zeros(3);
  zeros.setZero();
  auto logits = T::constant({3, 1}, zeros);
  CHECK(generator_adv_loss(logits).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto d = discriminator_adv_loss(logits, logits);
  CHECK(d.real_term.item() == doctest::Approx(std::log(2.0)));
  CHECK(d.fake_term.item() == doctest::Approx(std::log(2.0)));
  CHECK(d.total.item() == doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("r1 penalty: constant and linear discriminators") {
  auto rng = Rng::seeded(8);

  // generic linear/constant "discriminators" via the same double-backprop
  // path the real one uses
  ad::ArrayX<double> av(12);
  for (int i = 0; i < 12; ++i) av[i] = rng.uniform(-1, 1);
  auto a = T::constant({12, 1}, av);

  ad::ArrayX<double> xv(2 * 12);
  for (int i = 0; i < 24; ++i) xv[i] = rng.uniform(0, 1);
  auto x = T::leaf({2, 12}, xv, true);

  auto r1_of = [&](const std::function<T(const T&)>& dfn, double gamma) {
    T logits = dfn(x);
    T gx = ad::grad(ad::sum_all(logits), {x}, true)[0];
    return ad::mul_scalar(ad::sum_squares(gx), gamma * 0.5 / 2.0);  // n = 2
  };

  // constant D -> zero penalty
  auto constant = [&](const T&) { return T::scalar(3.0); };
  CHECK(r1_of(constant, 1.0).item() == 0.0);

  // D(x) = <a, x> per row -> gamma/2 * ||a||^2
  auto linear = [&](const T& in) { return ad::matmul(in, a); };
  const double expect = 0.5 * 1.3 * av.matrix().squaredNorm();
  CHECK(r1_of(linear, 1.3).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("unresolved thresholds and missing specs are rejected") {
  auto l = layout_n(2);
  auto rng = Rng::seeded(9);
  auto batch = batch_for(l, 4, rng);
  std::vector<AttributeEmbeddings<double>> embs(1);
  embs[0].resize(1);
  ad::ArrayX<double> v(1);
  v << 0.0;
  embs[0][0].assign(4, T::constant({1}, v));
  // only c0 specified, c1 missing
  CHECK_THROWS_AS(contrastive_from_embeddings<double>(
                      batch, {spec_l2("c0", 0.1, 1.0)}, embs),
                  ValidationError);
  AttributeSpec unresolved = spec_l2("c0", 0.1, 1.0);
  unresolved.taus_set = false;
  std::vector<AttributeEmbeddings<double>> embs2(2);
  for (auto& e : embs2) {
    e.resize(1);
    e[0].assign(4, T::constant({1}, v));
  }
  CHECK_THROWS_AS(contrastive_from_embeddings<double>(
                      batch, {unresolved, spec_l2("c1", 0.1, 1.0)}, embs2),
                  ValidationError);
}
