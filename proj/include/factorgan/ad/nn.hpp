#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factorgan/ad/ops.hpp"
#include "factorgan/core/rng.hpp"

namespace fgan::ad {

// Cached index plans (shared across scalar instantiations).
IndexPlanPtr im2col_plan(int n, int c, int h, int w, int k, int pad);
IndexPlanPtr conv_perm_plan(int n, int co, int h, int w);
IndexPlanPtr upsample2_plan(int n, int c, int h, int w);
IndexPlanPtr avgpool_quad_plan(int n, int c, int h, int w);

// x: [m, in], w: [in, out], b: [out] -> [m, out]
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return linear_fused(x, w, b);
}

// 3x3 (or kxk) same-padding convolution, stride 1.
// x: [n, c, h, w], weight: [c*k*k, co], bias: [co] -> [n, co, h, w]
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight,
                 const Tensor<S>& bias, int k) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("conv2d expects [n,c,h,w]");
  const int n = d[0], c = d[1], h = d[2], w = d[3];
  if (weight.dims()[0] != c * k * k)
    throw ValidationError("conv2d: weight rows != c*k*k");
  const int co = weight.dims()[1];
  Tensor<S> cols = gather(x, im2col_plan(n, c, h, w, k, k / 2));
  Tensor<S> y = linear(cols, weight, bias);  // [n*h*w, co]
  return gather(y, conv_perm_plan(n, co, h, w));
}

// Per-channel modulation y = x * (1 + s) + t with s,t of shape [n, c].
template <typename S>
Tensor<S> film(const Tensor<S>& x, const Tensor<S>& s, const Tensor<S>& t) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("film expects [n,c,h,w]");
  const int n = d[0], c = d[1], hw = d[2] * d[3];
  auto spread = [&](const Tensor<S>& v) {
    return reshape(repeat_last(reshape(v, {n * c}), hw), d);
  };
  Tensor<S> scale = spread(add_scalar(s, S(1)));
  return add(mul(x, scale), spread(t));
}

// Channels-last 3x3/1x1 convolution: x [n,h,w,c], weight [k*k*c, co] with
// taps ordered (dy, dx, c), bias [co] -> [n,h,w,co].
template <typename S>
Tensor<S> conv2d_nhwc(const Tensor<S>& x, const Tensor<S>& weight,
                      const Tensor<S>& bias, int k) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("conv2d_nhwc expects [n,h,w,c]");
  if (weight.dims()[0] != k * k * d[3])
    throw ValidationError("conv2d_nhwc: weight rows != k*k*c");
  Tensor<S> cols = k == 1 ? reshape(x, {d[0] * d[1] * d[2], d[3]})
                          : im2col_nhwc(x, k);
  Tensor<S> y = linear(cols, weight, bias);
  return reshape(y, {d[0], d[1], d[2], weight.dims()[1]});
}

// Channels-last FiLM: y = x * (1 + s) + t, s/t of shape [n, c]; fused
// per-sample row ops keep it to two memory passes.
template <typename S>
Tensor<S> film_nhwc(const Tensor<S>& x, const Tensor<S>& s,
                    const Tensor<S>& t) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("film_nhwc expects [n,h,w,c]");
  const int hw = d[1] * d[2];
  Tensor<S> scaled = rows_scale(x, add_scalar(s, S(1)), hw);
  return reshape(rows_add(scaled, t, hw), d);
}

template <typename S>
Tensor<S> upsample2x(const Tensor<S>& x) {
  const auto& d = x.dims();
  return gather(x, upsample2_plan(d[0], d[1], d[2], d[3]));
}

template <typename S>
Tensor<S> avgpool2x(const Tensor<S>& x) {
  const auto& d = x.dims();
  if (d[2] % 2 || d[3] % 2) throw ValidationError("avgpool2x: odd extent");
  Tensor<S> quads = gather(x, avgpool_quad_plan(d[0], d[1], d[2], d[3]));
  Tensor<S> sums = sum_last(quads, 4);
  return mul_scalar(reshape(sums, {d[0], d[1], d[2] / 2, d[3] / 2}), S(0.25));
}

// ---------------------------------------------------------------------------
// parameters

template <typename S>
struct ParameterStore {
  std::vector<Tensor<S>> params;

  Tensor<S> add(const std::string& name, Dims dims, ArrayX<S> init) {
    params.push_back(
        Tensor<S>::leaf(std::move(dims), std::move(init), true, name));
    return params.back();
  }

  Tensor<S> find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name() == name) return p;
    throw ValidationError("parameter not found: " + name);
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }
};

template <typename S>
ArrayX<S> normal_init(Rng& rng, std::int64_t n, double stddev) {
  ArrayX<S> a(n);
  for (std::int64_t i = 0; i < n; ++i)
    a[i] = static_cast<S>(stddev * rng.normal());
  return a;
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, S lr, S beta1, S beta2, S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    st_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      st_[i].m = ArrayX<S>::Zero(params_[i].numel());
      st_[i].v = ArrayX<S>::Zero(params_[i].numel());
    }
  }

  void set_lr(S lr) { lr_ = lr; }
  S lr() const { return lr_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const S c1 = S(1) - std::pow(b1_, static_cast<S>(t_));
    const S c2 = S(1) - std::pow(b2_, static_cast<S>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const ArrayX<S>& g = p.grad();
      st_[i].m = b1_ * st_[i].m + (S(1) - b1_) * g;
      st_[i].v = b2_ * st_[i].v + (S(1) - b2_) * g * g;
      p.mutable_value() -=
          lr_ * (st_[i].m / c1) / ((st_[i].v / c2).sqrt() + eps_);
    }
  }

  std::int64_t step_count() const { return t_; }

  // Flat state for checkpoints: t, then m/v per parameter.
  std::vector<ArrayX<S>> export_state() const {
    std::vector<ArrayX<S>> out;
    for (const auto& s : st_) {
      out.push_back(s.m);
      out.push_back(s.v);
    }
    return out;
  }
  void import_state(const std::vector<ArrayX<S>>& blobs, std::int64_t t) {
    if (blobs.size() != st_.size() * 2)
      throw ValidationError("optimizer state size mismatch");
    for (std::size_t i = 0; i < st_.size(); ++i) {
      st_[i].m = blobs[2 * i];
      st_[i].v = blobs[2 * i + 1];
    }
    t_ = t;
  }

 private:
  struct State {
    ArrayX<S> m, v;
  };
  std::vector<Tensor<S>> params_;
  std::vector<State> st_;
  S lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

// Exponential moving average of a parameter list, for eval-time weights.
template <typename S>
class Ema {
 public:
  explicit Ema(const std::vector<Tensor<S>>& params) {
    for (const auto& p : params) values_.push_back(p.value());
  }

  void update(const std::vector<Tensor<S>>& params, S decay) {
    for (std::size_t i = 0; i < values_.size(); ++i)
      values_[i] = decay * values_[i] + (S(1) - decay) * params[i].value();
  }

  void load_into(std::vector<Tensor<S>>& params) const {
    for (std::size_t i = 0; i < values_.size(); ++i)
      params[i].mutable_value() = values_[i];
  }

  std::vector<ArrayX<S>>& values() { return values_; }
  const std::vector<ArrayX<S>>& values() const { return values_; }

 private:
  std::vector<ArrayX<S>> values_;
};

}  // namespace fgan::ad
