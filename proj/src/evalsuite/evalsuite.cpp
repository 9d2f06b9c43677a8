#include "factorgan/evalsuite/evalsuite.hpp"

#include <algorithm>
#include <cmath>

#include "factorgan/core/parallel.hpp"

namespace fgan::evalsuite {

namespace {

using ad::Tensor;
using Tf = Tensor<float>;
using Td = Tensor<double>;

Tf z_tensor(const std::vector<latent::FactorizedVector>& zs) {
  const int n = static_cast<int>(zs.size());
  const int d = static_cast<int>(zs[0].flat.size());
  ad::ArrayX<float> v(std::int64_t(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      v[std::int64_t(i) * d + j] = static_cast<float>(zs[i].flat[j]);
  return Tf::constant({n, d}, std::move(v));
}

Image<double> generate_one(const nets::Model& model,
                           const latent::FactorizedVector& z) {
  ad::NoGradGuard ng;
  auto imgs = model.gen.forward(model.mapping.forward(z_tensor({z})));
  return nets::batch_image(imgs, 0);
}

double metric_value(predictors::Distance metric, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& b) {
  ad::NoGradGuard ng;
  ad::ArrayX<double> av(a.size()), bv(b.size());
  for (int i = 0; i < a.size(); ++i) av[i] = a[i];
  for (int i = 0; i < b.size(); ++i) bv[i] = b[i];
  return predictors::metric_distance<double>(
             metric, Td::constant({int(a.size())}, av),
             Td::constant({int(b.size())}, bv))
      .item();
}

Eigen::VectorXd predict_vec(const std::string& id, const Image<double>& img) {
  ad::NoGradGuard ng;
  auto e = predictors::predict<double>(id, to_tensor<double>(img));
  Eigen::VectorXd v(e.numel());
  for (int i = 0; i < v.size(); ++i) v[i] = e.value()[i];
  return v;
}

double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double idx = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] * (1.0 - (idx - lo)) + v[hi] * (idx - lo);
}

}  // namespace

std::map<std::string, PrecisionStat> control_precision(
    const nets::Model& model, const latent::WMeans& means,
    const control::EncoderSet& encoders, const shapeworld::Dataset& data,
    const ExperimentConfig& cfg, int n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("control_precision: n must be >= 1");
  Rng root = Rng::seeded(seed).derive("control_precision");

  std::map<std::string, PrecisionStat> out;
  for (const auto& spec : cfg.attributes) {
    auto enc_it = encoders.find(spec.name);
    if (enc_it == encoders.end()) continue;  // skip with notice upstream
    const auto& enc = enc_it->second;

    // attribute pool from real data: predicted by default, ground-truth
    // values mapped through the natural calibration otherwise
    std::vector<Eigen::VectorXd> pool;
    Rng rng = root.derive("pool." + spec.name);
    int guard = 0;
    while (static_cast<int>(pool.size()) < n && guard < 20 * n) {
      ++guard;
      const int idx = static_cast<int>(rng.uniform_int(data.size()));
      try {
        if (cfg.eval.pool_mode == "predicted") {
          pool.push_back(predict_vec(spec.predictors[0], data.image(idx)));
        } else {
          const auto& p = data.params[idx];
          Eigen::VectorXd nat;
          if (spec.name == "position") nat = Eigen::Vector2d(p.x, p.y);
          else if (spec.name == "orientation")
            nat = Eigen::VectorXd::Constant(1, p.theta);
          else if (spec.name == "scale")
            nat = Eigen::VectorXd::Constant(1, p.scale);
          else if (spec.name == "color") nat = Eigen::Vector3d(p.r, p.g, p.b);
          else if (spec.name == "illum")
            nat = Eigen::Vector3d(p.gx, p.gy, p.b0);
          else {
            pool.push_back(predict_vec(spec.predictors[0], data.image(idx)));
            continue;
          }
          pool.push_back(enc.calibration.usable()
                             ? enc.calibration.natural_to_pred(nat)
                             : nat);
        }
      } catch (const PredictorError&) {
      }
    }
    if (pool.empty())
      throw Error("control_precision: empty attribute pool for '" +
                  spec.name + "'");

    PrecisionStat stat;
    std::vector<double> errs;
    Rng gen_rng = root.derive("gen." + spec.name);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      try {
        auto res = control::controlled_generate(
            model, means, encoders, {{spec.name, pool[i]}}, cfg.psi,
            gen_rng.bits());
        const Eigen::VectorXd got =
            predict_vec(spec.predictors[0], res.image);
        errs.push_back(metric_value(spec.distance, pool[i], got));
      } catch (const PredictorError&) {
        ++stat.skipped;
      }
    }
    if (errs.empty())
      throw Error("control_precision: every generation degenerated for '" +
                  spec.name + "'");

    // random-pairing baseline over the pool
    Rng perm_rng = root.derive("baseline." + spec.name);
    double base = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      std::size_t j = perm_rng.uniform_int(pool.size());
      while (j == i && pool.size() > 1) j = perm_rng.uniform_int(pool.size());
      base += metric_value(spec.distance, pool[i], pool[j]);
    }
    stat.baseline_mean = base / double(pool.size());
    stat.n = static_cast<int>(errs.size());
    stat.mean = 0;
    for (double e : errs) stat.mean += e;
    stat.mean /= errs.size();
    stat.median = quantile_of(errs, 0.5);
    stat.p90 = quantile_of(errs, 0.9);
    out.emplace(spec.name, stat);
  }
  return out;
}

IdPreservation id_preservation(const nets::Model& model, int n_pairs,
                               std::uint64_t seed) {
  if (n_pairs < 1) throw ValidationError("id_preservation: n_pairs >= 1");
  Rng rng = Rng::seeded(seed).derive("id_preservation");
  const auto layout = model.layout;
  const int id_k = layout->index_of("id");

  IdPreservation out;
  out.n_pairs = n_pairs;
  std::int64_t n_same = 0, n_cross = 0;
  for (int t = 0; t < n_pairs; ++t) {
    auto zs = latent::sample_z(layout, 4, rng);
    zs[1].sub(id_k) = zs[0].sub(id_k);  // shared id; rest independent
    try {
      const auto a = predict_vec("hu", generate_one(model, zs[0]));
      const auto b = predict_vec("hu", generate_one(model, zs[1]));
      out.same += metric_value(predictors::Distance::Cosine, a, b);
      ++n_same;
    } catch (const PredictorError&) {
    }
    try {
      const auto c = predict_vec("hu", generate_one(model, zs[2]));
      const auto d = predict_vec("hu", generate_one(model, zs[3]));
      out.cross += metric_value(predictors::Distance::Cosine, c, d);
      ++n_cross;
    } catch (const PredictorError&) {
    }
  }
  if (n_same == 0 || n_cross == 0)
    throw Error("id_preservation: all pairs degenerated");
  out.same /= double(n_same);
  out.cross /= double(n_cross);
  out.ratio = out.cross > 0 ? out.same / out.cross : 1.0;
  return out;
}

DisentanglementMatrix disentanglement_matrix(
    const nets::Model& model,
    const std::vector<predictors::AttributeSpec>& specs, int n,
    std::uint64_t seed) {
  if (n < 1) throw ValidationError("disentanglement_matrix: n must be >= 1");
  Rng rng = Rng::seeded(seed).derive("disentanglement");
  const auto layout = model.layout;

  std::vector<const predictors::AttributeSpec*> order;
  for (int k = 0; k < layout->num_controls(); ++k) {
    const std::string& name = layout->sub(k).name;
    const predictors::AttributeSpec* found = nullptr;
    for (const auto& s : specs)
      if (s.name == name) found = &s;
    if (!found)
      throw ValidationError("disentanglement_matrix: no spec for '" + name +
                            "'");
    order.push_back(found);
  }
  const int nk = static_cast<int>(order.size());

  auto pair_distances = [&](const Image<double>& a, const Image<double>& b,
                            std::vector<double>& acc,
                            std::vector<std::int64_t>& cnt) {
    for (int r = 0; r < nk; ++r) {
      try {
        double d = 0;
        for (const auto& p : order[r]->predictors)
          d += metric_value(order[r]->distance, predict_vec(p, a),
                            predict_vec(p, b));
        acc[r] += d;
        ++cnt[r];
      } catch (const PredictorError&) {
      }
    }
  };

  // denominators: fully independent pairs
  std::vector<double> indep(nk, 0.0);
  std::vector<std::int64_t> indep_n(nk, 0);
  for (int t = 0; t < n; ++t) {
    auto zs = latent::sample_z(layout, 2, rng);
    pair_distances(generate_one(model, zs[0]), generate_one(model, zs[1]),
                   indep, indep_n);
  }

  DisentanglementMatrix out;
  out.values.resize(nk, nk);
  for (int k = 0; k < nk; ++k) {
    out.attributes.push_back(order[k]->name);
    std::vector<double> acc(nk, 0.0);
    std::vector<std::int64_t> cnt(nk, 0);
    for (int t = 0; t < n; ++t) {
      auto zs = latent::sample_z(layout, 2, rng);
      zs[1] = zs[0];
      // vary only subspace k
      auto fresh = latent::sample_z(layout, 1, rng);
      zs[1].sub(layout->index_of(order[k]->name)) =
          fresh[0].sub(layout->index_of(order[k]->name));
      pair_distances(generate_one(model, zs[0]), generate_one(model, zs[1]),
                     acc, cnt);
    }
    for (int r = 0; r < nk; ++r) {
      const double denom =
          indep_n[r] > 0 ? indep[r] / double(indep_n[r]) : 0.0;
      const double numer = cnt[r] > 0 ? acc[r] / double(cnt[r]) : 0.0;
      out.values(k, r) = denom > 1e-12 ? numer / denom : 0.0;
    }
  }
  double diag = 0, off = 0;
  for (int k = 0; k < nk; ++k)
    for (int r = 0; r < nk; ++r)
      (k == r ? diag : off) += out.values(k, r);
  out.diag_mean = diag / nk;
  out.offdiag_mean = nk > 1 ? off / double(nk * (nk - 1)) : 0.0;
  return out;
}

int attribute_feature_dim() { return 7 + 2 + 2 + 1 + 3 + 3 + 36; }

Eigen::VectorXd attribute_features(const Image<double>& img) {
  Eigen::VectorXd f(attribute_feature_dim());
  int off = 0;
  ad::NoGradGuard ng;
  const auto t = to_tensor<double>(img);
  auto put = [&](const Eigen::VectorXd& v) {
    f.segment(off, v.size()) = v;
    off += static_cast<int>(v.size());
  };
  try {
    auto e = predictors::hu_embedding(t);
    Eigen::VectorXd v(7);
    for (int i = 0; i < 7; ++i) v[i] = e.value()[i];
    put(v);
  } catch (const PredictorError&) {
    put(Eigen::VectorXd::Zero(7));
  }
  try {
    auto e = predictors::centroid(t);
    put(Eigen::Vector2d(e.value()[0], e.value()[1]));
  } catch (const PredictorError&) {
    put(Eigen::Vector2d(0.5, 0.5));
  }
  try {
    const double th = predictors::orientation(t).item() * M_PI / 90.0;
    put(Eigen::Vector2d(std::cos(th), std::sin(th)));
  } catch (const PredictorError&) {
    put(Eigen::Vector2d(0.0, 0.0));
  }
  try {
    put(Eigen::VectorXd::Constant(1, predictors::log_mass(t).item()));
  } catch (const PredictorError&) {
    put(Eigen::VectorXd::Constant(
        1, std::log(predictors::kMassEpsPerPixel * img.pixels())));
  }
  try {
    auto e = predictors::mean_color(t);
    put(Eigen::Vector3d(e.value()[0], e.value()[1], e.value()[2]));
  } catch (const PredictorError&) {
    put(Eigen::Vector3d(0, 0, 0));
  }
  try {
    auto e = predictors::illum_plane(t);
    put(Eigen::Vector3d(e.value()[0], e.value()[1], e.value()[2]));
  } catch (const PredictorError&) {
    put(Eigen::Vector3d(0, 0, 0));
  }
  {
    auto e = predictors::gram_style_embedding(t);
    Eigen::VectorXd v(36);
    for (int i = 0; i < 36; ++i) v[i] = e.value()[i];
    put(v);
  }
  return f;
}

double frechet_distance(const Eigen::MatrixXd& feats_a,
                        const Eigen::MatrixXd& feats_b) {
  if (feats_a.cols() != feats_b.cols())
    throw ValidationError("frechet_distance: feature dims differ");
  if (feats_a.rows() < 2 || feats_b.rows() < 2)
    throw ValidationError("frechet_distance: needs >= 2 samples per set");
  if (feats_a.rows() == feats_b.rows() && feats_a == feats_b)
    return 0.0;  // identical sets, exactly
  const int d = static_cast<int>(feats_a.cols());

  // joint standardization keeps the metric symmetric and scale-free
  Eigen::MatrixXd joint(feats_a.rows() + feats_b.rows(), d);
  joint << feats_a, feats_b;
  const Eigen::RowVectorXd mu = joint.colwise().mean();
  Eigen::RowVectorXd sd(d);
  for (int c = 0; c < d; ++c)
    sd[c] = std::max(1e-12, std::sqrt((joint.col(c).array() - mu[c])
                                          .square()
                                          .mean()));
  auto standardize = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd s = m.rowwise() - mu;
    for (int c = 0; c < d; ++c) s.col(c) /= sd[c];
    return s;
  };
  const Eigen::MatrixXd a = standardize(feats_a);
  const Eigen::MatrixXd b = standardize(feats_b);

  const Eigen::VectorXd mu_a = a.colwise().mean();
  const Eigen::VectorXd mu_b = b.colwise().mean();
  auto cov_of = [&](const Eigen::MatrixXd& m, const Eigen::VectorXd& mean) {
    Eigen::MatrixXd c = m.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = c.transpose() * c / double(m.rows() - 1);
    cov.diagonal().array() += 1e-6;  // regularization
    return cov;
  };
  const Eigen::MatrixXd ca = cov_of(a, mu_a);
  const Eigen::MatrixXd cb = cov_of(b, mu_b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esa(ca);
  if (esa.eigenvalues().minCoeff() <= 0)
    throw Error("frechet_distance: covariance singular after regularization");
  Eigen::VectorXd root_vals = esa.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = esa.eigenvectors() *
                                 root_vals.asDiagonal() *
                                 esa.eigenvectors().transpose();

  Eigen::MatrixXd inner = sqrt_a * cb * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());  // symmetrize
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esi(inner);
  const double tr_sqrt =
      esi.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (mu_a - mu_b).squaredNorm();
  return mean_term + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
}

namespace {

Eigen::MatrixXd dataset_features(const shapeworld::Dataset& data,
                                 const std::vector<int>& idx) {
  Eigen::MatrixXd f(idx.size(), attribute_feature_dim());
  std::vector<Eigen::VectorXd> rows(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    rows[i] = attribute_features(data.image(idx[i]));
  });
  for (std::size_t i = 0; i < idx.size(); ++i) f.row(i) = rows[i];
  return f;
}

}  // namespace

double attribute_fid(const nets::Model& model, const shapeworld::Dataset& data,
                     int n, std::uint64_t seed) {
  if (data.size() < n)
    throw ValidationError("attribute_fid: dataset smaller than n");
  if (n < 8) throw ValidationError("attribute_fid: n too small");
  Rng rng = Rng::seeded(seed).derive("fid");

  std::vector<int> idx;
  for (int i = 0; i < n; ++i)
    idx.push_back(static_cast<int>(rng.uniform_int(data.size())));
  const Eigen::MatrixXd real = dataset_features(data, idx);

  Eigen::MatrixXd fake(n, attribute_feature_dim());
  for (int i = 0; i < n; ++i) {
    auto zs = latent::sample_z(model.layout, 1, rng);
    fake.row(i) = attribute_features(generate_one(model, zs[0]));
  }
  return frechet_distance(real, fake);
}

double attribute_fid_split_half(const shapeworld::Dataset& data, int n,
                                std::uint64_t seed) {
  if (data.size() < 2 * n)
    throw ValidationError("attribute_fid_split_half: needs 2n samples");
  Rng rng = Rng::seeded(seed).derive("fid_split");
  std::vector<int> all(data.size());
  for (int i = 0; i < data.size(); ++i) all[i] = i;
  for (int i = data.size() - 1; i > 0; --i)
    std::swap(all[i], all[rng.uniform_int(i + 1)]);
  const std::vector<int> ia(all.begin(), all.begin() + n);
  const std::vector<int> ib(all.begin() + n, all.begin() + 2 * n);
  return frechet_distance(dataset_features(data, ia),
                          dataset_features(data, ib));
}

}  // namespace fgan::evalsuite
