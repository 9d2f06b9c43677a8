#include "factorgan/projection/projection.hpp"

#include <cmath>

#include "factorgan/io/bundle.hpp"

namespace fgan::projection {

namespace {

using ad::Tensor;
using Tf = Tensor<float>;

Eigen::VectorXd to_vecd(const ad::ArrayX<float>& a) {
  Eigen::VectorXd v(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) v[i] = a[i];
  return v;
}

ad::ArrayX<float> to_arrf(const Eigen::VectorXd& v) {
  ad::ArrayX<float> a(v.size());
  for (int i = 0; i < v.size(); ++i) a[i] = static_cast<float>(v[i]);
  return a;
}

}  // namespace

PcaMap fit_pca_subspaces(const nets::Model& model, int n, double target_var,
                         std::uint64_t seed) {
  const auto layout = model.layout;
  for (int k = 0; k < layout->num_controls(); ++k)
    if (n < 10 * layout->sub(k).w_dim)
      throw ValidationError("fit_pca_subspaces: n must be >= 10x subspace dim");
  if (!(target_var > 0.0 && target_var <= 1.0))
    throw ValidationError("fit_pca_subspaces: target_var must be in (0,1]");

  Rng rng = Rng::seeded(seed).derive("pca");
  std::vector<Eigen::MatrixXd> samples;
  for (int k = 0; k < layout->num_controls(); ++k)
    samples.emplace_back(n, layout->sub(k).w_dim);
  {
    ad::NoGradGuard ng;
    for (int i = 0; i < n; ++i) {
      auto zs = latent::sample_z(layout, 1, rng);
      const auto w = model.mapping.map_vector(zs[0]);
      for (int k = 0; k < layout->num_controls(); ++k)
        samples[k].row(i) = Eigen::VectorXd(w.sub(k));
    }
  }

  PcaMap out;
  for (int k = 0; k < layout->num_controls(); ++k) {
    const std::string& name = layout->sub(k).name;
    if (name == "id") continue;  // id and other stay unconstrained (w+)
    out.emplace(name, fit_pca(name, samples[k], target_var));
  }
  return out;
}

PcaSubspace fit_pca(const std::string& attribute,
                    const Eigen::MatrixXd& samples, double target_var) {
  const int n = static_cast<int>(samples.rows());
  if (n < 2) throw ValidationError("fit_pca: needs >= 2 samples");
  PcaSubspace sub;
  sub.attribute = attribute;
  sub.sample_count = n;
  sub.mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - sub.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd evals = es.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
  const double total = std::max(evals.sum(), 1e-30);
  double acc = 0;
  int m = 0;
  while (m < evals.size() && acc / total < target_var) {
    acc += std::max(0.0, evals[m]);
    ++m;
  }
  sub.retained = acc / total;
  sub.components = evecs.leftCols(m).transpose();
  return sub;
}

Eigen::VectorXd pca_reproject(const PcaSubspace& sub,
                              const Eigen::VectorXd& w_sub) {
  if (w_sub.size() != sub.mean.size())
    throw ValidationError("pca_reproject: dimension mismatch");
  return sub.mean +
         sub.components.transpose() * (sub.components * (w_sub - sub.mean));
}

void save_pca_map(const std::string& path, const PcaMap& map,
                  const std::string& checkpoint_hash) {
  io::TensorBundle b;
  b.meta["kind"] = "pca_map";
  b.meta["checkpoint_hash"] = checkpoint_hash;
  io::Json idx = io::Json::array();
  for (const auto& [name, sub] : map) {
    idx.push_back({{"attribute", name},
                   {"dim", sub.mean.size()},
                   {"components", sub.components.rows()},
                   {"retained", sub.retained},
                   {"sample_count", sub.sample_count}});
    std::vector<float> mean(sub.mean.size());
    for (int i = 0; i < sub.mean.size(); ++i)
      mean[i] = static_cast<float>(sub.mean[i]);
    b.blobs.emplace_back("mean." + name, std::move(mean));
    std::vector<float> comp(sub.components.size());
    for (int r = 0; r < sub.components.rows(); ++r)
      for (int c = 0; c < sub.components.cols(); ++c)
        comp[r * sub.components.cols() + c] =
            static_cast<float>(sub.components(r, c));
    b.blobs.emplace_back("components." + name, std::move(comp));
  }
  b.meta["subspaces"] = idx;
  save_bundle(path, b);
}

PcaMap load_pca_map(const std::string& path,
                    const std::string& expect_checkpoint_hash, bool force) {
  const io::TensorBundle b = io::load_bundle(path);
  if (b.meta.value("kind", "") != "pca_map")
    throw ValidationError(path + " is not a PCA map");
  if (!force && !expect_checkpoint_hash.empty() &&
      b.meta.at("checkpoint_hash").get<std::string>() !=
          expect_checkpoint_hash)
    throw ValidationError("PCA map belongs to a different checkpoint");
  PcaMap out;
  for (const auto& e : b.meta.at("subspaces")) {
    PcaSubspace sub;
    sub.attribute = e.at("attribute").get<std::string>();
    const int dim = e.at("dim").get<int>();
    const int m = e.at("components").get<int>();
    sub.retained = e.at("retained").get<double>();
    sub.sample_count = e.at("sample_count").get<int>();
    const auto& mean = b.blob("mean." + sub.attribute);
    sub.mean.resize(dim);
    for (int i = 0; i < dim; ++i) sub.mean[i] = mean[i];
    const auto& comp = b.blob("components." + sub.attribute);
    sub.components.resize(m, dim);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < dim; ++c) sub.components(r, c) = comp[r * dim + c];
    out.emplace(sub.attribute, std::move(sub));
  }
  return out;
}

namespace {

// Assembles the per-block [1, w_dim] latents from leaves.
std::vector<Tf> assemble_blocks(const latent::LayoutPtr& layout,
                                const std::vector<Tf>& id_blocks,
                                const std::vector<Tf>& other_blocks,
                                const std::map<std::string, Tf>& controls) {
  std::vector<Tf> out;
  const int blocks = static_cast<int>(other_blocks.size());
  for (int b = 0; b < blocks; ++b) {
    std::vector<Tf> parts;
    for (int k = 0; k < layout->num_subspaces(); ++k) {
      const std::string& name = layout->sub(k).name;
      if (name == "id" && !id_blocks.empty())
        parts.push_back(ad::reshape(id_blocks[b], {1, layout->sub(k).w_dim}));
      else if (name == "other")
        parts.push_back(
            ad::reshape(other_blocks[b], {1, layout->sub(k).w_dim}));
      else
        parts.push_back(
            ad::reshape(controls.at(name), {1, layout->sub(k).w_dim}));
    }
    out.push_back(ad::concat_cols(parts));
  }
  return out;
}

Tf multiscale_mse(const Tf& recon, const Tf& target) {
  Tf d = ad::sub(recon, target);
  Tf loss = ad::mean_all(ad::mul(d, d));
  Tf r2 = ad::avgpool2x_nhwc(recon), t2 = ad::avgpool2x_nhwc(target);
  Tf d2 = ad::sub(r2, t2);
  loss = ad::add(loss, ad::mean_all(ad::mul(d2, d2)));
  Tf d4 = ad::sub(ad::avgpool2x_nhwc(r2), ad::avgpool2x_nhwc(t2));
  return ad::add(loss, ad::mean_all(ad::mul(d4, d4)));
}

}  // namespace

ProjectionResult project_image(
    const nets::Model& model, const latent::WMeans& means, const PcaMap& pca,
    const Image<double>& target, const ProjectionConfig& pcfg,
    const std::vector<predictors::AttributeSpec>& feature_specs,
    const std::string& checkpoint_hash) {
  if (pcfg.iters < 1)
    throw ValidationError("project_image: iters must be >= 1");
  if (target.res != model.gen.config().resolution)
    throw ValidationError("project_image: target resolution mismatch");
  validate_image(target);

  const auto layout = model.layout;
  const int blocks = model.gen.num_blocks();
  const bool has_id = layout->has("id");
  const int other_k = layout->index_of("other");

  // leaves initialized at the empirical means / PCA means; only the id and
  // other subspaces get per-block (w+) freedom
  std::vector<Tf> id_blocks, other_blocks;
  for (int b = 0; b < blocks; ++b) {
    if (has_id) {
      const int id_k = layout->index_of("id");
      id_blocks.push_back(Tf::leaf(
          {layout->sub(id_k).w_dim},
          to_arrf(means.flat.segment(layout->w_offset(id_k),
                                     layout->sub(id_k).w_dim)),
          true));
    }
    other_blocks.push_back(Tf::leaf(
        {layout->sub(other_k).w_dim},
        to_arrf(means.flat.segment(layout->w_offset(other_k),
                                   layout->sub(other_k).w_dim)),
        true));
  }
  std::map<std::string, Tf> controls;
  std::vector<Tf> leaves = id_blocks;
  leaves.insert(leaves.end(), other_blocks.begin(), other_blocks.end());
  for (int k = 0; k < layout->num_controls(); ++k) {
    const std::string& name = layout->sub(k).name;
    if (name == "id") continue;
    auto it = pca.find(name);
    if (it == pca.end())
      throw ValidationError("project_image: PCA map lacks subspace '" + name +
                            "'");
    Tf leaf = Tf::leaf({layout->sub(k).w_dim}, to_arrf(it->second.mean), true);
    controls.emplace(name, leaf);
    leaves.push_back(leaf);
  }

  Tf target_t = to_tensor<float>(target);  // [3, res, res] for predictors
  // channels-last copy for the pixel losses
  ad::ArrayX<float> tv(std::int64_t(target.res) * target.res * 3);
  for (int y = 0; y < target.res; ++y)
    for (int x = 0; x < target.res; ++x)
      for (int c = 0; c < 3; ++c)
        tv[(std::int64_t(y) * target.res + x) * 3 + c] =
            static_cast<float>(target.at(c, y, x));
  Tf target_batch =
      Tf::constant({1, target.res, target.res, 3}, std::move(tv));

  ad::Adam<float> opt(leaves, float(pcfg.lr), 0.9f, 0.999f);
  ProjectionResult result;
  result.checkpoint_hash = checkpoint_hash;
  result.best_loss = 1e300;

  for (int it = 1; it <= pcfg.iters; ++it) {
    opt.set_lr(float(pcfg.lr * 0.5 * (1.0 + std::cos(M_PI * (it - 1) /
                                                     double(pcfg.iters)))));
    opt.zero_grad();
    auto wb = assemble_blocks(layout, id_blocks, other_blocks, controls);
    Tf recon = model.gen.forward_blocks(wb);
    Tf loss = multiscale_mse(recon, target_batch);
    if (pcfg.feature_term) {
      ad::Tensor<float> img = nets::batch_image_chw(recon, 0);
      for (const auto& spec : feature_specs) {
        try {
          loss = ad::add(loss, ad::mul_scalar(
                                   predictors::attribute_distance<float>(
                                       spec, img, target_t),
                                   float(pcfg.feature_weight * spec.weight)));
        } catch (const PredictorError&) {
        }
      }
    }
    const double loss_val = loss.item();
    if (!std::isfinite(loss_val)) {
      std::string msg = "project_image: non-finite loss at iteration " +
                        std::to_string(it) + "; trace:";
      for (auto& [ti, tv] : result.trace)
        msg += " (" + std::to_string(ti) + ", " + std::to_string(tv) + ")";
      throw TrainingAborted(msg);
    }
    ad::backward(loss);
    opt.step();

    // hard constraint: controls live on their PCA affine subspaces
    for (auto& [name, leaf] : controls) {
      const Eigen::VectorXd projected =
          pca_reproject(pca.at(name), to_vecd(leaf.value()));
      leaf.mutable_value() = to_arrf(projected);
    }

    // best-iterate bookkeeping uses the post-projection loss
    {
      ad::NoGradGuard ng;
      auto wb2 = assemble_blocks(layout, id_blocks, other_blocks, controls);
      const double cur =
          multiscale_mse(model.gen.forward_blocks(wb2), target_batch).item();
      result.trace.emplace_back(it, cur);
      if (cur < result.best_loss) {
        result.best_loss = cur;
        result.id_blocks.clear();
        result.other_blocks.clear();
        result.controls.clear();
        for (auto& t : id_blocks) result.id_blocks.push_back(to_vecd(t.value()));
        for (auto& t : other_blocks)
          result.other_blocks.push_back(to_vecd(t.value()));
        for (auto& [name, leaf] : controls)
          result.controls[name] = to_vecd(leaf.value());
      }
    }
  }
  return result;
}

Image<double> render_projection(const nets::Model& model,
                                const ProjectionResult& r) {
  const auto layout = model.layout;
  ad::NoGradGuard ng;
  std::vector<Tf> id_blocks, other_blocks;
  for (const auto& v : r.id_blocks)
    id_blocks.push_back(Tf::constant({int(v.size())}, to_arrf(v)));
  for (const auto& v : r.other_blocks)
    other_blocks.push_back(Tf::constant({int(v.size())}, to_arrf(v)));
  std::map<std::string, Tf> controls;
  for (const auto& [name, v] : r.controls)
    controls.emplace(name, Tf::constant({int(v.size())}, to_arrf(v)));
  auto wb = assemble_blocks(layout, id_blocks, other_blocks, controls);
  Tf img = model.gen.forward_blocks(wb);
  return nets::batch_image(img, 0);
}

Image<double> edit_projected(
    const nets::Model& model, const ProjectionResult& r,
    const control::EncoderSet& encoders,
    const std::map<std::string, Eigen::VectorXd>& requests,
    ProjectionResult* edited_out) {
  ProjectionResult edited = r;
  for (const auto& [name, y] : requests) {
    if (name == "id" || name == "other")
      throw ValidationError("attribute '" + name +
                            "' cannot be edited through an encoder");
    if (!edited.controls.count(name))
      throw ValidationError("projection has no control subspace '" + name +
                            "'");
    auto it = encoders.find(name);
    if (it == encoders.end())
      throw ValidationError("no encoder for attribute '" + name + "'");
    it->second.check_range(y);
    edited.controls[name] = it->second.predict_w(y);
  }
  if (edited_out) *edited_out = edited;
  return render_projection(model, edited);
}

void save_projection(const std::string& path, const ProjectionResult& r) {
  io::Json j;
  j["kind"] = "projection";
  j["checkpoint_hash"] = r.checkpoint_hash;
  j["best_loss"] = r.best_loss;
  auto vec_json = [](const Eigen::VectorXd& v) {
    io::Json a = io::Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["id_blocks"] = io::Json::array();
  for (const auto& v : r.id_blocks) j["id_blocks"].push_back(vec_json(v));
  j["other_blocks"] = io::Json::array();
  for (const auto& v : r.other_blocks)
    j["other_blocks"].push_back(vec_json(v));
  j["controls"] = io::Json::object();
  for (const auto& [name, v] : r.controls) j["controls"][name] = vec_json(v);
  j["trace"] = io::Json::array();
  for (const auto& [it, loss] : r.trace) j["trace"].push_back({it, loss});
  io::write_json(path, j);
}

ProjectionResult load_projection(const std::string& path) {
  const io::Json j = io::read_json(path);
  if (j.value("kind", "") != "projection")
    throw ValidationError(path + " is not a projection result");
  ProjectionResult r;
  r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  r.best_loss = j.at("best_loss").get<double>();
  auto to_vec = [](const io::Json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
  };
  for (const auto& v : j.at("id_blocks")) r.id_blocks.push_back(to_vec(v));
  for (const auto& v : j.at("other_blocks"))
    r.other_blocks.push_back(to_vec(v));
  for (const auto& [name, v] : j.at("controls").items())
    r.controls[name] = to_vec(v);
  for (const auto& t : j.at("trace"))
    r.trace.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
  return r;
}

}  // namespace fgan::projection
