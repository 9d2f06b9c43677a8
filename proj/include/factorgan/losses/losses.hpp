#pragma once

#include <map>
#include <string>
#include <vector>

#include "factorgan/latent/latent.hpp"
#include "factorgan/nets/nets.hpp"
#include "factorgan/predictors/predictors.hpp"

namespace fgan::losses {

struct AttributeTerms {
  double positive = 0.0;   // normalized hinge sum over shared pairs
  double negative = 0.0;   // normalized hinge sum over different pairs
  std::int64_t pos_pairs = 0;
  std::int64_t neg_pairs = 0;
  std::int64_t skipped = 0;  // pairs dropped because a predictor degenerated
};

template <typename S>
struct ContrastiveReport {
  ad::Tensor<S> total;  // graph scalar; zero tensor when nothing contributed
  std::map<std::string, AttributeTerms> per_attribute;
};

// Per-image, per-predictor embeddings for one attribute; an undefined
// tensor marks a degenerate predictor on that image.
template <typename S>
using AttributeEmbeddings = std::vector<std::vector<ad::Tensor<S>>>;

// Eq. 1-2 core on precomputed embeddings. Pair sharing is decided by exact
// z-subvector equality; each attribute's positive/negative sums are
// normalized by the number of evaluated pairs of that kind. Skipped pairs
// (missing embeddings) drop out of both numerator and count.
template <typename S>
ContrastiveReport<S> contrastive_from_embeddings(
    const latent::TrainingBatch& batch,
    const std::vector<predictors::AttributeSpec>& specs,
    const std::vector<AttributeEmbeddings<S>>& embeddings);

// Image-facing wrapper: runs every spec's predictors on every image,
// catching degenerate-predictor errors per (image, predictor).
template <typename S>
ContrastiveReport<S> contrastive_loss(
    const latent::TrainingBatch& batch,
    const std::vector<ad::Tensor<S>>& images,
    const std::vector<predictors::AttributeSpec>& specs);

// Non-saturating logistic losses.
template <typename S>
ad::Tensor<S> generator_adv_loss(const ad::Tensor<S>& fake_logits) {
  return ad::mean_all(ad::softplus(ad::neg(fake_logits)));
}

template <typename S>
struct DiscLoss {
  ad::Tensor<S> real_term;  // E softplus(-D(real))
  ad::Tensor<S> fake_term;  // E softplus(D(fake))
  ad::Tensor<S> total;
};

template <typename S>
DiscLoss<S> discriminator_adv_loss(const ad::Tensor<S>& real_logits,
                                   const ad::Tensor<S>& fake_logits) {
  DiscLoss<S> out;
  out.real_term = ad::mean_all(ad::softplus(ad::neg(real_logits)));
  out.fake_term = ad::mean_all(ad::softplus(fake_logits));
  out.total = ad::add(out.real_term, out.fake_term);
  return out;
}

// gamma/2 * E ||d D(x) / d x||^2 via double backprop.
template <typename S>
ad::Tensor<S> r1_penalty(const nets::Discriminator<S>& disc,
                         const ad::Tensor<S>& real_images, S gamma) {
  if (!real_images.is_param())
    throw ValidationError("r1_penalty: images must be a grad-enabled leaf");
  ad::Tensor<S> logits = disc.forward(real_images);
  ad::Tensor<S> gx =
      ad::grad(ad::sum_all(logits), {real_images}, /*create_graph=*/true)[0];
  const S inv_n = S(1) / static_cast<S>(real_images.dims()[0]);
  return ad::mul_scalar(ad::sum_squares(gx), gamma * S(0.5) * inv_n);
}

}  // namespace fgan::losses
