#include "factorgan/losses/losses.hpp"

#include <set>

namespace fgan::losses {

namespace {

template <typename S>
ad::Tensor<S> pair_distance(const predictors::AttributeSpec& spec,
                            const AttributeEmbeddings<S>& emb, int i, int j,
                            bool& ok) {
  ad::Tensor<S> d;
  for (std::size_t p = 0; p < spec.predictors.size(); ++p) {
    if (!emb[p][i].defined() || !emb[p][j].defined()) {
      ok = false;
      return {};
    }
    ad::Tensor<S> dp =
        predictors::metric_distance<S>(spec.distance, emb[p][i], emb[p][j]);
    d = d.defined() ? ad::add(d, dp) : dp;
  }
  ok = true;
  return d;
}

}  // namespace

template <typename S>
ContrastiveReport<S> contrastive_from_embeddings(
    const latent::TrainingBatch& batch,
    const std::vector<predictors::AttributeSpec>& specs,
    const std::vector<AttributeEmbeddings<S>>& embeddings) {
  if (batch.z.empty()) throw ValidationError("contrastive: empty batch");
  const latent::LayoutPtr layout = batch.z[0].layout;
  if (specs.size() != embeddings.size())
    throw ValidationError("contrastive: specs/embeddings size mismatch");

  // Specs must cover every control subspace by name.
  std::set<std::string> names;
  for (const auto& s : specs) names.insert(s.name);
  for (int k = 0; k < layout->num_controls(); ++k)
    if (!names.count(layout->sub(k).name))
      throw ValidationError("contrastive: no spec for control subspace '" +
                            layout->sub(k).name + "'");

  const int nb = static_cast<int>(batch.z.size());
  ContrastiveReport<S> report;
  report.total = ad::Tensor<S>::scalar(S(0));

  for (std::size_t a = 0; a < specs.size(); ++a) {
    const auto& spec = specs[a];
    if (!spec.taus_set)
      throw ValidationError("contrastive: attribute '" + spec.name +
                            "' has unresolved thresholds");
    if (!layout->has(spec.name)) continue;
    const int k = layout->index_of(spec.name);

    AttributeTerms terms;
    std::vector<ad::Tensor<S>> pos, neg;
    for (int i = 0; i < nb; ++i) {
      for (int j = i + 1; j < nb; ++j) {
        bool ok = false;
        ad::Tensor<S> d = pair_distance(spec, embeddings[a], i, j, ok);
        if (!ok) {
          ++terms.skipped;
          continue;
        }
        const bool same = batch.z[i].sub(k) == batch.z[j].sub(k);
        if (same) {
          pos.push_back(ad::relu(ad::add_scalar(d, S(-spec.tau_plus))));
          ++terms.pos_pairs;
        } else {
          neg.push_back(ad::relu(ad::add_scalar(ad::neg(d), S(spec.tau_minus))));
          ++terms.neg_pairs;
        }
      }
    }

    ad::Tensor<S> attr_total = ad::Tensor<S>::scalar(S(0));
    auto mean_of = [](std::vector<ad::Tensor<S>>& v) {
      ad::Tensor<S> s = v[0];
      for (std::size_t t = 1; t < v.size(); ++t) s = ad::add(s, v[t]);
      return ad::mul_scalar(s, S(1) / static_cast<S>(v.size()));
    };
    if (!pos.empty()) {
      ad::Tensor<S> m = mean_of(pos);
      terms.positive = static_cast<double>(m.item());
      attr_total = ad::add(attr_total, m);
    }
    if (!neg.empty()) {
      ad::Tensor<S> m = mean_of(neg);
      terms.negative = static_cast<double>(m.item());
      attr_total = ad::add(attr_total, m);
    }
    report.total = ad::add(
        report.total, ad::mul_scalar(attr_total, S(spec.weight)));
    report.per_attribute[spec.name] = terms;
  }
  return report;
}

template <typename S>
ContrastiveReport<S> contrastive_loss(
    const latent::TrainingBatch& batch,
    const std::vector<ad::Tensor<S>>& images,
    const std::vector<predictors::AttributeSpec>& specs) {
  if (images.size() != batch.z.size())
    throw ValidationError("contrastive: images/batch size mismatch");
  std::vector<AttributeEmbeddings<S>> embeddings(specs.size());
  for (std::size_t a = 0; a < specs.size(); ++a) {
    embeddings[a].resize(specs[a].predictors.size());
    for (std::size_t p = 0; p < specs[a].predictors.size(); ++p) {
      embeddings[a][p].resize(images.size());
      for (std::size_t i = 0; i < images.size(); ++i) {
        try {
          embeddings[a][p][i] =
              predictors::predict<S>(specs[a].predictors[p], images[i]);
        } catch (const PredictorError&) {
          // degenerate on this image; pairs touching it are skipped
        }
      }
    }
  }
  return contrastive_from_embeddings(batch, specs, embeddings);
}

template ContrastiveReport<float> contrastive_from_embeddings<float>(
    const latent::TrainingBatch&,
    const std::vector<predictors::AttributeSpec>&,
    const std::vector<AttributeEmbeddings<float>>&);
template ContrastiveReport<double> contrastive_from_embeddings<double>(
    const latent::TrainingBatch&,
    const std::vector<predictors::AttributeSpec>&,
    const std::vector<AttributeEmbeddings<double>>&);
template ContrastiveReport<float> contrastive_loss<float>(
    const latent::TrainingBatch&, const std::vector<ad::Tensor<float>>&,
    const std::vector<predictors::AttributeSpec>&);
template ContrastiveReport<double> contrastive_loss<double>(
    const latent::TrainingBatch&, const std::vector<ad::Tensor<double>>&,
    const std::vector<predictors::AttributeSpec>&);

}  // namespace fgan::losses
