#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "factorgan/ad/tensor.hpp"
#include "factorgan/core/common.hpp"

namespace fgan {

// RGB image in [0,1], channel-major flat storage: (c * res + y) * res + x.
template <typename S = double>
struct Image {
  int res = 0;
  Eigen::Array<S, Eigen::Dynamic, 1> data;

  Image() = default;
  explicit Image(int r)
      : res(r), data(Eigen::Array<S, Eigen::Dynamic, 1>::Zero(
                    3 * std::int64_t(r) * r)) {}

  S& at(int c, int y, int x) {
    return data[(std::int64_t(c) * res + y) * res + x];
  }
  S at(int c, int y, int x) const {
    return data[(std::int64_t(c) * res + y) * res + x];
  }
  std::int64_t pixels() const { return std::int64_t(res) * res; }
};

template <typename S>
void validate_image(const Image<S>& img) {
  if (img.res <= 0 || img.data.size() != 3 * img.pixels())
    throw ValidationError("image: bad shape");
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    const S v = img.data[i];
    if (!std::isfinite(static_cast<double>(v)) || v < S(0) || v > S(1))
      throw ValidationError("image: values must be finite and in [0,1]");
  }
}

template <typename TS, typename S>
ad::Tensor<TS> to_tensor(const Image<S>& img, bool requires_grad = false) {
  ad::ArrayX<TS> v(img.data.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = static_cast<TS>(img.data[i]);
  return ad::Tensor<TS>::leaf({3, img.res, img.res}, std::move(v),
                              requires_grad);
}

template <typename S, typename TS>
Image<S> from_tensor(const ad::Tensor<TS>& t) {
  const auto& d = t.dims();
  if (d.size() != 3 || d[0] != 3 || d[1] != d[2])
    throw ValidationError("image tensor must be [3,res,res]");
  Image<S> img(d[1]);
  for (Eigen::Index i = 0; i < t.numel(); ++i)
    img.data[i] = static_cast<S>(t.value()[i]);
  return img;
}

// 8-bit interleaved RGB rows, the PNG wire layout.
template <typename S>
std::vector<std::uint8_t> to_u8(const Image<S>& img) {
  std::vector<std::uint8_t> out(std::size_t(img.pixels()) * 3);
  for (int y = 0; y < img.res; ++y)
    for (int x = 0; x < img.res; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = static_cast<double>(img.at(c, y, x));
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        out[(std::size_t(y) * img.res + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return out;
}

template <typename S>
Image<S> from_u8(const std::uint8_t* rgb, int res) {
  Image<S> img(res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) =
            static_cast<S>(rgb[(std::size_t(y) * res + x) * 3 + c]) / S(255);
  return img;
}

}  // namespace fgan
