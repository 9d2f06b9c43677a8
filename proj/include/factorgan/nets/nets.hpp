#pragma once

#include <optional>
#include <string>
#include <vector>

#include "factorgan/ad/nn.hpp"
#include "factorgan/core/image.hpp"
#include "factorgan/core/rng.hpp"
#include "factorgan/latent/latent.hpp"

namespace fgan::nets {

inline constexpr float kLreluSlope = 0.2f;

// Fully-connected stack with leaky nonlinearities and a linear head.
template <typename S>
struct Mlp {
  int in_dim = 0, out_dim = 0, depth = 0, width = 0;
  std::vector<ad::Tensor<S>> weights, biases;

  ad::Tensor<S> forward(const ad::Tensor<S>& x) const {
    ad::Tensor<S> h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = ad::linear(h, weights[l], biases[l]);
      if (l + 1 < weights.size()) h = ad::leaky_relu(h, S(kLreluSlope));
    }
    return h;
  }
};

// depth counts trainable layers; the last one is linear.
template <typename S>
Mlp<S> mlp_regressor(ad::ParameterStore<S>& store, const std::string& prefix,
                     int in_dim, int out_dim, int depth, int width, Rng& rng) {
  if (in_dim < 1 || out_dim < 1)
    throw ValidationError("mlp_regressor: dims must be >= 1");
  if (depth < 1) throw ValidationError("mlp_regressor: depth must be >= 1");
  if (width < 1) throw ValidationError("mlp_regressor: width must be >= 1");
  Mlp<S> m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.depth = depth;
  m.width = width;
  for (int l = 0; l < depth; ++l) {
    const int fi = l == 0 ? in_dim : width;
    const int fo = l == depth - 1 ? out_dim : width;
    const double std_dev = 1.0 / std::sqrt(double(fi));
    m.weights.push_back(store.add(prefix + ".w" + std::to_string(l), {fi, fo},
                                  ad::normal_init<S>(rng, fi * fo, std_dev)));
    m.biases.push_back(store.add(prefix + ".b" + std::to_string(l), {fo},
                                 ad::ArrayX<S>::Zero(fo)));
  }
  return m;
}

// One MLP per subspace; z^k -> w^k independently.
template <typename S>
class MappingStack {
 public:
  MappingStack() = default;
  MappingStack(latent::LayoutPtr layout, int depth, int width_min, Rng& rng)
      : layout_(std::move(layout)) {
    for (int k = 0; k < layout_->num_subspaces(); ++k) {
      const auto& sub = layout_->sub(k);
      const int width = std::max(width_min, std::max(sub.z_dim, sub.w_dim));
      mlps_.push_back(mlp_regressor(params_, "map." + sub.name, sub.z_dim,
                                    sub.w_dim, depth, width, rng));
    }
  }

  // z: [n, z_dim] -> w: [n, w_dim]
  ad::Tensor<S> forward(const ad::Tensor<S>& z) const {
    if (z.dims().size() != 2 || z.dims()[1] != layout_->z_dim())
      throw ValidationError("mapping: z batch does not match layout");
    std::vector<ad::Tensor<S>> parts;
    for (int k = 0; k < layout_->num_subspaces(); ++k) {
      ad::Tensor<S> zk =
          ad::slice_cols(z, layout_->z_offset(k), layout_->sub(k).z_dim);
      parts.push_back(mlps_[k].forward(zk));
    }
    return ad::concat_cols(parts);
  }

  // Value-level convenience for a single vector.
  latent::FactorizedVector map_vector(
      const latent::FactorizedVector& z) const {
    if (z.space != latent::Space::Z || !(*z.layout == *layout_))
      throw ValidationError("mapping: vector layout mismatch");
    ad::NoGradGuard ng;
    ad::ArrayX<S> zv(z.flat.size());
    for (int i = 0; i < z.flat.size(); ++i) zv[i] = S(z.flat[i]);
    ad::Tensor<S> w = forward(
        ad::Tensor<S>::constant({1, int(z.flat.size())}, std::move(zv)));
    latent::FactorizedVector out(layout_, latent::Space::W);
    for (int i = 0; i < out.flat.size(); ++i) out.flat[i] = w.value()[i];
    return out;
  }

  const latent::LayoutPtr& layout() const { return layout_; }
  ad::ParameterStore<S>& params() { return params_; }
  const ad::ParameterStore<S>& params() const { return params_; }

 private:
  latent::LayoutPtr layout_;
  std::vector<Mlp<S>> mlps_;
  ad::ParameterStore<S> params_;
};

struct GeneratorConfig {
  int resolution = 64;
  std::vector<int> channels;  // one per stage: base(4x4) then each block
  bool noise_inputs = false;

  int num_blocks() const { return static_cast<int>(channels.size()) - 1; }
  void validate() const;
  io::Json to_json() const;
  static GeneratorConfig from_json(const io::Json& j);
};

// Style-modulated upsampling generator: learned 4x4 base, per-block
// [upsample, conv3x3+FiLM+lrelu, conv3x3+FiLM+lrelu], sigmoid RGB head.
// Feature maps are channels-last [n, h, w, c] throughout.
template <typename S>
class Generator {
 public:
  Generator() = default;
  Generator(latent::LayoutPtr layout, GeneratorConfig cfg, Rng& rng)
      : layout_(std::move(layout)), cfg_(std::move(cfg)) {
    cfg_.validate();
    const int wd = layout_->w_dim();
    base_ = params_.add(
        "gen.base", {4, 4, cfg_.channels[0]},
        ad::normal_init<S>(rng, cfg_.channels[0] * 16, 1.0));
    for (int b = 0; b < cfg_.num_blocks(); ++b) {
      const int ci = cfg_.channels[b], co = cfg_.channels[b + 1];
      const std::string p = "gen.block" + std::to_string(b);
      auto conv = [&](const std::string& tag, int fi, int fo) {
        const double std_dev = 1.0 / std::sqrt(double(fi) * 9.0);
        conv_w_.push_back(params_.add(p + "." + tag + ".w", {9 * fi, fo},
                                      ad::normal_init<S>(rng, 9 * fi * fo,
                                                         std_dev)));
        conv_b_.push_back(
            params_.add(p + "." + tag + ".b", {fo}, ad::ArrayX<S>::Zero(fo)));
      };
      auto film = [&](const std::string& tag, int ch) {
        const double std_dev = 0.1 / std::sqrt(double(wd));
        film_w_.push_back(params_.add(p + "." + tag + ".w", {wd, 2 * ch},
                                      ad::normal_init<S>(rng, wd * 2 * ch,
                                                         std_dev)));
        film_b_.push_back(params_.add(p + "." + tag + ".b", {2 * ch},
                                      ad::ArrayX<S>::Zero(2 * ch)));
      };
      conv("c1", ci, co);
      film("f1", co);
      conv("c2", co, co);
      film("f2", co);
      if (cfg_.noise_inputs) {
        noise_scale_.push_back(params_.add(p + ".noise1", {1},
                                           ad::ArrayX<S>::Zero(1)));
        noise_scale_.push_back(params_.add(p + ".noise2", {1},
                                           ad::ArrayX<S>::Zero(1)));
      }
    }
    const int c_last = cfg_.channels.back();
    rgb_w_ = params_.add("gen.rgb.w", {c_last, 3},
                         ad::normal_init<S>(rng, c_last * 3,
                                            1.0 / std::sqrt(double(c_last))));
    rgb_b_ = params_.add("gen.rgb.b", {3}, ad::ArrayX<S>::Zero(3));
  }

  int num_blocks() const { return cfg_.num_blocks(); }
  const GeneratorConfig& config() const { return cfg_; }
  const latent::LayoutPtr& layout() const { return layout_; }
  ad::ParameterStore<S>& params() { return params_; }
  const ad::ParameterStore<S>& params() const { return params_; }

  // w: [n, w_dim] -> images [n, 3, res, res]
  ad::Tensor<S> forward(const ad::Tensor<S>& w, Rng* noise_rng = nullptr) const {
    const int blocks = num_blocks();
    std::vector<ad::Tensor<S>> per_block(blocks, w);
    return forward_blocks(per_block, noise_rng);
  }

  // Extended latents: one w per block (w+), each [n, w_dim].
  ad::Tensor<S> forward_blocks(const std::vector<ad::Tensor<S>>& w_blocks,
                               Rng* noise_rng = nullptr) const {
    if (static_cast<int>(w_blocks.size()) != num_blocks())
      throw ValidationError("generator: expected " +
                            std::to_string(num_blocks()) +
                            " per-block latents, got " +
                            std::to_string(w_blocks.size()));
    const int n = w_blocks[0].dims()[0];
    for (const auto& w : w_blocks)
      if (w.dims().size() != 2 || w.dims()[0] != n ||
          w.dims()[1] != layout_->w_dim())
        throw ValidationError("generator: w block shape mismatch");

    ad::Tensor<S> x = ad::reshape(
        ad::broadcast_rows(ad::reshape(base_, {cfg_.channels[0] * 16}), n),
        {n, 4, 4, cfg_.channels[0]});
    for (int b = 0; b < num_blocks(); ++b) {
      x = ad::upsample2x_nhwc(x);
      x = stage(x, w_blocks[b], b, 0, n, noise_rng);
      x = stage(x, w_blocks[b], b, 1, n, noise_rng);
    }
    ad::Tensor<S> rgb = ad::conv2d_nhwc(x, rgb_w_, rgb_b_, 1);
    return ad::sigmoid(rgb);  // [n, res, res, 3]
  }

 private:
  ad::Tensor<S> stage(const ad::Tensor<S>& x, const ad::Tensor<S>& w, int b,
                      int half, int n, Rng* noise_rng) const {
    const int idx = 2 * b + half;
    ad::Tensor<S> h = ad::conv2d_nhwc(x, conv_w_[idx], conv_b_[idx], 3);
    if (cfg_.noise_inputs && noise_rng) {
      ad::ArrayX<S> nv(h.numel());
      for (Eigen::Index i = 0; i < nv.size(); ++i)
        nv[i] = S(noise_rng->normal());
      ad::Tensor<S> noise = ad::Tensor<S>::constant(h.dims(), std::move(nv));
      h = ad::add(h, ad::mul(noise, noise_scale_[idx]));
    }
    ad::Tensor<S> style = ad::linear(w, film_w_[idx], film_b_[idx]);
    const int ch = h.dims()[3];
    ad::Tensor<S> s = ad::slice_cols(style, 0, ch);
    ad::Tensor<S> t = ad::slice_cols(style, ch, ch);
    return ad::leaky_relu(ad::film_nhwc(h, s, t), S(kLreluSlope));
  }

  latent::LayoutPtr layout_;
  GeneratorConfig cfg_;
  ad::ParameterStore<S> params_;
  ad::Tensor<S> base_;
  std::vector<ad::Tensor<S>> conv_w_, conv_b_, film_w_, film_b_, noise_scale_;
  ad::Tensor<S> rgb_w_, rgb_b_;
};

struct DiscriminatorConfig {
  int resolution = 64;
  std::vector<int> channels;  // finest-to-coarsest, one per stage down to 4x4
  void validate() const;
  io::Json to_json() const;
  static DiscriminatorConfig from_json(const io::Json& j);
};

// Mirrored downsampling CNN -> scalar logit.
template <typename S>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(DiscriminatorConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto conv = [&](const std::string& tag, int fi, int fo, int k) {
      const double std_dev = 1.0 / std::sqrt(double(fi) * k * k);
      conv_w_.push_back(params_.add(tag + ".w", {k * k * fi, fo},
                                    ad::normal_init<S>(rng, k * k * fi * fo,
                                                       std_dev)));
      conv_b_.push_back(
          params_.add(tag + ".b", {fo}, ad::ArrayX<S>::Zero(fo)));
    };
    conv("disc.rgb", 3, cfg_.channels[0], 1);
    const int stages = static_cast<int>(cfg_.channels.size()) - 1;
    for (int s = 0; s < stages; ++s)
      conv("disc.stage" + std::to_string(s), cfg_.channels[s],
           cfg_.channels[s + 1], 3);
    const int flat = cfg_.channels.back() * 16;
    fc1_w_ = params_.add("disc.fc1.w", {flat, cfg_.channels.back()},
                         ad::normal_init<S>(rng, flat * cfg_.channels.back(),
                                            1.0 / std::sqrt(double(flat))));
    fc1_b_ = params_.add("disc.fc1.b", {cfg_.channels.back()},
                         ad::ArrayX<S>::Zero(cfg_.channels.back()));
    fc2_w_ = params_.add(
        "disc.fc2.w", {cfg_.channels.back(), 1},
        ad::normal_init<S>(rng, cfg_.channels.back(),
                           1.0 / std::sqrt(double(cfg_.channels.back()))));
    fc2_b_ = params_.add("disc.fc2.b", {1}, ad::ArrayX<S>::Zero(1));
  }

  // images: [n, res, res, 3] -> logits [n, 1]
  ad::Tensor<S> forward(const ad::Tensor<S>& images) const {
    const auto& d = images.dims();
    if (d.size() != 4 || d[3] != 3 || d[1] != cfg_.resolution ||
        d[2] != cfg_.resolution)
      throw ValidationError("discriminator: bad input shape");
    const int n = d[0];
    ad::Tensor<S> x =
        ad::leaky_relu(ad::conv2d_nhwc(images, conv_w_[0], conv_b_[0], 1),
                       S(kLreluSlope));
    const int stages = static_cast<int>(cfg_.channels.size()) - 1;
    for (int s = 0; s < stages; ++s) {
      x = ad::leaky_relu(
          ad::conv2d_nhwc(x, conv_w_[s + 1], conv_b_[s + 1], 3),
          S(kLreluSlope));
      x = ad::avgpool2x_nhwc(x);
    }
    ad::Tensor<S> flat = ad::reshape(x, {n, cfg_.channels.back() * 16});
    ad::Tensor<S> h =
        ad::leaky_relu(ad::linear(flat, fc1_w_, fc1_b_), S(kLreluSlope));
    return ad::linear(h, fc2_w_, fc2_b_);
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  ad::ParameterStore<S>& params() { return params_; }
  const ad::ParameterStore<S>& params() const { return params_; }

 private:
  DiscriminatorConfig cfg_;
  ad::ParameterStore<S> params_;
  std::vector<ad::Tensor<S>> conv_w_, conv_b_;
  ad::Tensor<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// [n, h, w, 3] batch -> channel-major [3, h, w] single image (tape-safe).
template <typename S>
ad::Tensor<S> batch_image_chw(const ad::Tensor<S>& batch, int i) {
  const auto& d = batch.dims();
  if (d.size() != 4) throw ValidationError("batch_image_chw expects nhwc");
  ad::Tensor<S> row = ad::slice_rows(batch, i, 1);        // [1, h, w, c]
  ad::Tensor<S> hw_c = ad::reshape(row, {d[1] * d[2], d[3]});
  return ad::reshape(ad::transpose(hw_c), {d[3], d[1], d[2]});
}

template <typename S>
std::vector<ad::Tensor<S>> split_batch_images(const ad::Tensor<S>& batch) {
  std::vector<ad::Tensor<S>> out;
  for (int i = 0; i < batch.dims()[0]; ++i)
    out.push_back(batch_image_chw(batch, i));
  return out;
}

template <typename S>
Image<double> batch_image(const ad::Tensor<S>& batch, int i) {
  ad::NoGradGuard ng;
  return from_tensor<double>(batch_image_chw(batch, i));
}

}  // namespace fgan::nets
