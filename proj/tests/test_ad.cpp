#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "factorgan/ad/nn.hpp"
#include "factorgan/ad/ops.hpp"
#include "factorgan/core/rng.hpp"
#include "support/gradcheck.hpp"

using namespace fgan;
using ad::Tensor;
using T = Tensor<double>;

namespace {

T rand_leaf(Rng& rng, ad::Dims dims, double lo = -1.0, double hi = 1.0) {
  ad::ArrayX<double> v(ad::dims_numel(dims));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return T::leaf(dims, v, true);
}

}  // namespace

TEST_CASE("elementwise values") {
  auto a = T::constant({3}, (ad::ArrayX<double>(3) << 1, -2, 3).finished());
  auto b = T::constant({3}, (ad::ArrayX<double>(3) << 4, 5, -6).finished());
  CHECK(ad::add(a, b).value()[1] == doctest::Approx(3.0));
  CHECK(ad::mul(a, b).value()[2] == doctest::Approx(-18.0));
  CHECK(ad::maximum(a, b).value()[0] == doctest::Approx(4.0));
  CHECK(ad::minimum(a, b).value()[2] == doctest::Approx(-6.0));
  CHECK(ad::abs(a).value()[1] == doctest::Approx(2.0));
  CHECK(ad::sum_all(a).item() == doctest::Approx(2.0));
  CHECK(ad::mean_all(b).item() == doctest::Approx(1.0));
}

TEST_CASE("scalar broadcast add/mul") {
  auto a = T::constant({2, 2}, (ad::ArrayX<double>(4) << 1, 2, 3, 4).finished());
  auto s = T::scalar(10.0);
  CHECK(ad::add(a, s).value()[3] == doctest::Approx(14.0));
  CHECK(ad::mul(s, a).value()[0] == doctest::Approx(10.0));
}

TEST_CASE("matmul and transpose values") {
  auto a = T::constant({2, 3}, (ad::ArrayX<double>(6) << 1, 2, 3, 4, 5, 6).finished());
  auto b = T::constant({3, 2}, (ad::ArrayX<double>(6) << 7, 8, 9, 10, 11, 12).finished());
  auto c = ad::matmul(a, b);
  CHECK(c.value()[0] == doctest::Approx(58.0));
  CHECK(c.value()[3] == doctest::Approx(154.0));
  auto at = ad::transpose(a);
  CHECK(at.dims()[0] == 3);
  CHECK(at.value()[1] == doctest::Approx(4.0));
}

TEST_CASE("gradcheck: arithmetic chain") {
  auto rng = Rng::seeded(7);
  auto x = rand_leaf(rng, {6}, 0.2, 1.5);
  auto y = rand_leaf(rng, {6}, 0.3, 1.2);
  auto f = [&] {
    auto z = ad::div(ad::mul(x, y), ad::add_scalar(ad::mul(x, x), 0.7));
    return ad::sum_all(ad::mul(z, z));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x, y}) < 1e-6);
}

TEST_CASE("gradcheck: unary functions") {
  auto rng = Rng::seeded(8);
  auto x = rand_leaf(rng, {8}, 0.3, 1.8);
  auto f = [&] {
    auto a = ad::log(ad::add_scalar(ad::exp(ad::neg(x)), 1.0));
    auto b = ad::sqrt(ad::add_scalar(ad::mul(x, x), 0.1));
    auto c = ad::sigmoid(ad::sub(a, b));
    auto d = ad::softplus(ad::mul_scalar(c, 3.0));
    return ad::sum_all(ad::add(d, ad::symlog(ad::mul_scalar(x, 5.0))));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x}) < 1e-6);
}

TEST_CASE("gradcheck: trig and atan2") {
  auto rng = Rng::seeded(9);
  auto x = rand_leaf(rng, {5}, 0.4, 1.4);
  auto y = rand_leaf(rng, {5}, -1.4, -0.4);
  auto f = [&] {
    auto t = ad::atan2(y, x);
    return ad::sum_all(ad::add(ad::sin(t), ad::mul(ad::cos(x), t)));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x, y}) < 1e-6);
}

TEST_CASE("gradcheck: max/min/abs/leaky away from kinks") {
  auto rng = Rng::seeded(10);
  auto x = rand_leaf(rng, {7}, 0.2, 1.0);
  auto y = rand_leaf(rng, {7}, -1.0, -0.2);
  auto f = [&] {
    auto m = ad::maximum(ad::mul(x, x), ad::abs(y));
    auto lo = ad::minimum(x, y);
    return ad::sum_all(ad::add(ad::leaky_relu(ad::sub(m, lo), 0.2),
                               ad::relu(ad::add(x, y))));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x, y}) < 1e-6);
}

TEST_CASE("gradcheck: reductions, broadcast, shape ops") {
  auto rng = Rng::seeded(11);
  auto x = rand_leaf(rng, {3, 4});
  auto v = rand_leaf(rng, {4});
  auto f = [&] {
    auto b = ad::broadcast_rows(v, 3);
    auto y = ad::mul(x, b);
    auto cs = ad::colsum(y);
    auto rs = ad::sum_last(y, 4);
    auto r = ad::repeat_last(rs, 2);
    auto sl = ad::slice_cols(y, 1, 2);
    auto sr = ad::slice_rows(y, 0, 2);
    auto cat = ad::concat_cols(std::vector<T>{sl, sl});
    return ad::add(ad::sum_squares(cs),
                   ad::add(ad::sum_all(r),
                           ad::add(ad::sum_squares(cat), ad::sum_all(sr))));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x, v}) < 1e-6);
}

TEST_CASE("gradcheck: matmul/transpose/concat_rows") {
  auto rng = Rng::seeded(12);
  auto a = rand_leaf(rng, {3, 4});
  auto b = rand_leaf(rng, {4, 2});
  auto f = [&] {
    auto c = ad::matmul(a, b);
    auto d = ad::matmul(ad::transpose(c), c);
    auto e = ad::concat_rows(std::vector<T>{c, c});
    return ad::add(ad::sum_squares(d), ad::sum_all(e));
  };
  CHECK(testing::max_grad_rel_err<double>(f, {a, b}) < 1e-6);
}

TEST_CASE("gradcheck: conv2d/film/pool/upsample") {
  auto rng = Rng::seeded(13);
  auto x = rand_leaf(rng, {2, 3, 4, 4});
  auto w = rand_leaf(rng, {3 * 9, 5});
  auto bias = rand_leaf(rng, {5});
  auto s = rand_leaf(rng, {2, 5}, -0.3, 0.3);
  auto t = rand_leaf(rng, {2, 5}, -0.3, 0.3);
  auto f = [&] {
    auto y = ad::conv2d(x, w, bias, 3);
    y = ad::film(y, s, t);
    y = ad::leaky_relu(y, 0.2);
    auto up = ad::upsample2x(y);
    auto down = ad::avgpool2x(up);
    return ad::sum_squares(down);
  };
  CHECK(testing::max_grad_rel_err<double>(f, {x, w, bias, s, t}) < 1e-6);
}

TEST_CASE("no_grad scope produces constant results") {
  auto x = T::leaf({2}, (ad::ArrayX<double>(2) << 1, 2).finished(), true);
  {
    ad::NoGradGuard guard;
    auto y = ad::mul(x, x);
    CHECK_FALSE(y.needs_grad());
  }
  auto y = ad::mul(x, x);
  CHECK(y.needs_grad());
}

TEST_CASE("backward accumulates into leaf grads") {
  auto x = T::leaf({3}, (ad::ArrayX<double>(3) << 1, 2, 3).finished(), true);
  x.zero_grad();
  auto loss = ad::sum_squares(x);
  ad::backward(loss);
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  ad::backward(ad::sum_all(x));
  CHECK(x.grad()[1] == doctest::Approx(5.0));  // accumulation
}

TEST_CASE("grad() does not touch leaf accumulators") {
  auto x = T::leaf({2}, (ad::ArrayX<double>(2) << 3, 4).finished(), true);
  x.zero_grad();
  auto gs = ad::grad(ad::sum_squares(x), {x});
  CHECK(gs[0].value()[0] == doctest::Approx(6.0));
  CHECK(x.grad()[0] == doctest::Approx(0.0));
}

// Double backprop: d/dp of || dL/dx ||^2 must match finite differences,
// exercised through linear+lrelu+conv layers (the discriminator op set).
TEST_CASE("create_graph supports R1-style penalties") {
  auto rng = Rng::seeded(14);
  auto x = rand_leaf(rng, {1, 2, 4, 4});
  auto w = rand_leaf(rng, {2 * 9, 3});
  auto b = rand_leaf(rng, {3});
  auto w2 = rand_leaf(rng, {3 * 16, 1});

  auto penalty = [&]() -> T {
    auto h = ad::leaky_relu(ad::conv2d(x, w, b, 3), 0.2);
    auto flat = ad::reshape(h, {1, 3 * 16});
    auto logit = ad::sum_all(ad::matmul(flat, w2));
    auto gx = ad::grad(logit, {x}, /*create_graph=*/true)[0];
    return ad::sum_squares(gx);
  };
  CHECK(testing::max_grad_rel_err<double>(penalty, {w, b, w2}, 1e-5, 1e-7) <
        1e-5);
}

TEST_CASE("adam minimizes a quadratic") {
  auto x = T::leaf({4}, (ad::ArrayX<double>(4) << 4, -3, 2, -1).finished(), true);
  ad::Adam<double> opt({x}, 0.1, 0.9, 0.999);
  for (int i = 0; i < 400; ++i) {
    opt.zero_grad();
    ad::backward(ad::sum_squares(ad::add_scalar(x, -1.0)));
    opt.step();
  }
  for (int i = 0; i < 4; ++i) CHECK(x.value()[i] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("ema tracks and loads") {
  auto x = T::leaf({2}, (ad::ArrayX<double>(2) << 1, 1).finished(), true);
  ad::Ema<double> ema({x});
  x.mutable_value()[0] = 3.0;
  ema.update({x}, 0.5);
  CHECK(ema.values()[0][0] == doctest::Approx(2.0));
  std::vector<T> params{x};
  ema.load_into(params);
  CHECK(x.value()[0] == doctest::Approx(2.0));
}

TEST_CASE("float instantiation compiles and runs") {
  using Tf = Tensor<float>;
  auto x = Tf::leaf({3}, (ad::ArrayX<float>(3) << 1.f, 2.f, 3.f).finished(), true);
  x.zero_grad();
  auto y = ad::sum_squares(ad::sigmoid(x));
  ad::backward(y);
  CHECK(std::isfinite(x.grad()[0]));
}
