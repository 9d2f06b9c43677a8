#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "factorgan/ad/tensor.hpp"

// Elementwise ops broadcast a 1-element tensor against any shape; matrix ops
// treat tensors as row-major [rows, cols]. Every backward closure recomputes
// what it needs from the captured parents (never from the op's own output),
// so running a backward pass with recording on yields a differentiable
// gradient graph (double backprop).

namespace fgan::ad {

template <typename S>
void check_same_numel(const Tensor<S>& a, const Tensor<S>& b,
                      const char* op) {
  if (a.numel() != b.numel())
    throw ValidationError(std::string(op) + ": shape mismatch");
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  ArrayX<S> v;
  Dims dims;
  if (sa && !sb) {
    v = b.value() + a.value()[0];
    dims = b.dims();
  } else if (sb && !sa) {
    v = a.value() + b.value()[0];
    dims = a.dims();
  } else {
    check_same_numel(a, b, "add");
    v = a.value() + b.value();
    dims = a.dims();
  }
  return make_op<S>(dims, std::move(v), {a, b},
                    [sa, sb](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      Tensor<S> ga = (sa && g.numel() != 1) ? sum_all(g) : g;
                      Tensor<S> gb = (sb && g.numel() != 1) ? sum_all(g) : g;
                      return {ga, gb};
                    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  ArrayX<S> v;
  Dims dims;
  if (sa && !sb) {
    v = b.value() * a.value()[0];
    dims = b.dims();
  } else if (sb && !sa) {
    v = a.value() * b.value()[0];
    dims = a.dims();
  } else {
    check_same_numel(a, b, "mul");
    v = a.value() * b.value();
    dims = a.dims();
  }
  return make_op<S>(
      dims, std::move(v), {a, b},
      [a, b, sa, sb](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        Tensor<S> ga = mul(g, b);
        if (sa && ga.numel() != 1) ga = sum_all(ga);
        Tensor<S> gb = mul(g, a);
        if (sb && gb.numel() != 1) gb = sum_all(gb);
        return {ga, gb};
      });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return make_op<S>(x.dims(), -x.value(), {x},
                    [](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {neg(g)};
                    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, neg(b));
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value() + c), {x},
                    [](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {g};
                    });
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value() * c), {x},
                    [c](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul_scalar(g, c)};
                    });
}

// 1/x where |x| <= floor yields 0. The dead zone keeps hinge-masked paths
// (0 * inf) from poisoning gradients.
template <typename S>
Tensor<S> safe_reciprocal(const Tensor<S>& x, S floor = S(0)) {
  ArrayX<S> v(x.numel());
  const auto& xv = x.value();
  for (Eigen::Index i = 0; i < xv.size(); ++i)
    v[i] = std::abs(xv[i]) <= floor ? S(0) : S(1) / xv[i];
  return make_op<S>(
      x.dims(), std::move(v), {x},
      [x, floor](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        Tensor<S> r = safe_reciprocal(x, floor);
        return {neg(mul(mul(g, r), r))};
      });
}

template <typename S>
Tensor<S> reciprocal(const Tensor<S>& x) {
  return safe_reciprocal(x, S(0));
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, reciprocal(b));
}

// ---------------------------------------------------------------------------
// unary functions

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value().exp()), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, exp(x))};
                    });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value().log()), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, reciprocal(x))};
                    });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return make_op<S>(
      x.dims(), ArrayX<S>(x.value().sqrt()), {x},
      [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        Tensor<S> r = safe_reciprocal(sqrt(x), S(1e-30));
        return {mul_scalar(mul(g, r), S(0.5))};
      });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  ArrayX<S> sign(x.numel());
  const auto& xv = x.value();
  for (Eigen::Index i = 0; i < xv.size(); ++i)
    sign[i] = xv[i] > S(0) ? S(1) : (xv[i] < S(0) ? S(-1) : S(0));
  Tensor<S> mask = Tensor<S>::constant(x.dims(), std::move(sign));
  return make_op<S>(x.dims(), ArrayX<S>(x.value().abs()), {x},
                    [mask](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, mask)};
                    });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  const auto& xv = x.value();
  ArrayX<S> v = (xv >= S(0)).select(xv, slope * xv);
  Tensor<S> mask = Tensor<S>::constant(
      x.dims(), (xv >= S(0)).select(ArrayX<S>::Constant(xv.size(), S(1)),
                                    ArrayX<S>::Constant(xv.size(), slope)));
  return make_op<S>(x.dims(), std::move(v), {x},
                    [mask](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, mask)};
                    });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return leaky_relu(x, S(0));
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  const auto& xv = x.value();
  const ArrayX<S> en = (-xv.abs()).exp();
  ArrayX<S> v = (xv >= S(0)).select(S(1) / (S(1) + en), en / (S(1) + en));
  return make_op<S>(x.dims(), std::move(v), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      Tensor<S> s = sigmoid(x);
                      Tensor<S> one_minus = add_scalar(neg(s), S(1));
                      return {mul(mul(g, s), one_minus)};
                    });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  const auto& xv = x.value();
  ArrayX<S> v = xv.max(S(0)) + (S(1) + (-xv.abs()).exp()).log();
  return make_op<S>(x.dims(), std::move(v), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, sigmoid(x))};
                    });
}

template <typename S>
Tensor<S> sin(const Tensor<S>& x) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value().sin()), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {mul(g, cos(x))};
                    });
}

template <typename S>
Tensor<S> cos(const Tensor<S>& x) {
  return make_op<S>(x.dims(), ArrayX<S>(x.value().cos()), {x},
                    [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {neg(mul(g, sin(x)))};
                    });
}

template <typename S>
Tensor<S> atan2(const Tensor<S>& y, const Tensor<S>& x) {
  check_same_numel(y, x, "atan2");
  ArrayX<S> v(y.numel());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = std::atan2(y.value()[i], x.value()[i]);
  return make_op<S>(y.dims(), std::move(v), {y, x},
                    [y, x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      Tensor<S> denom =
                          reciprocal(add(mul(x, x), mul(y, y)));
                      Tensor<S> gy = mul(mul(g, x), denom);
                      Tensor<S> gx = neg(mul(mul(g, y), denom));
                      return {gy, gx};
                    });
}

// sign(x) * log1p(|x|); smooth except at the origin.
template <typename S>
Tensor<S> symlog(const Tensor<S>& x) {
  ArrayX<S> v(x.numel());
  const auto& xv = x.value();
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const S a = std::log1p(std::abs(xv[i]));
    v[i] = xv[i] < S(0) ? -a : a;
  }
  return make_op<S>(
      x.dims(), std::move(v), {x},
      [x](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        return {mul(g, reciprocal(add_scalar(abs(x), S(1))))};
      });
}

template <typename S>
Tensor<S> maximum(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_numel(a, b, "maximum");
  ArrayX<S> v(a.numel()), m(a.numel());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool first = a.value()[i] >= b.value()[i];
    v[i] = first ? a.value()[i] : b.value()[i];
    m[i] = first ? S(1) : S(0);
  }
  Tensor<S> mask = Tensor<S>::constant(a.dims(), std::move(m));
  return make_op<S>(a.dims(), std::move(v), {a, b},
                    [mask](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      Tensor<S> inv = add_scalar(neg(mask), S(1));
                      return {mul(g, mask), mul(g, inv)};
                    });
}

template <typename S>
Tensor<S> minimum(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_numel(a, b, "minimum");
  ArrayX<S> v(a.numel()), m(a.numel());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const bool first = a.value()[i] <= b.value()[i];
    v[i] = first ? a.value()[i] : b.value()[i];
    m[i] = first ? S(1) : S(0);
  }
  Tensor<S> mask = Tensor<S>::constant(a.dims(), std::move(m));
  return make_op<S>(a.dims(), std::move(v), {a, b},
                    [mask](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      Tensor<S> inv = add_scalar(neg(mask), S(1));
                      return {mul(g, mask), mul(g, inv)};
                    });
}

// ---------------------------------------------------------------------------
// reductions / broadcasts

template <typename S>
Tensor<S> fill_like(const Tensor<S>& scalar, const Dims& dims) {
  if (scalar.numel() != 1) throw ValidationError("fill_like needs a scalar");
  return make_op<S>(
      dims, ArrayX<S>::Constant(dims_numel(dims), scalar.value()[0]), {scalar},
      [](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        return {sum_all(g)};
      });
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  ArrayX<S> v(1);
  v[0] = x.value().sum();
  Dims xdims = x.dims();
  return make_op<S>({1}, std::move(v), {x},
                    [xdims](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {fill_like(g, xdims)};
                    });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return mul_scalar(sum_all(x), S(1) / static_cast<S>(x.numel()));
}

template <typename S>
Tensor<S> repeat_last(const Tensor<S>& x, int n);

// Collapses the trailing axis of length `group`: [.., group] -> [..].
template <typename S>
Tensor<S> sum_last(const Tensor<S>& x, int group) {
  if (group <= 0 || x.numel() % group != 0)
    throw ValidationError("sum_last: bad group");
  const std::int64_t rows = x.numel() / group;
  ArrayX<S> v(rows);
  const auto& xv = x.value();
  for (std::int64_t r = 0; r < rows; ++r)
    v[r] = xv.segment(r * group, group).sum();
  Dims dims;
  if (!x.dims().empty() && x.dims().back() == group && x.dims().size() > 1)
    dims = Dims(x.dims().begin(), x.dims().end() - 1);
  else
    dims = {static_cast<int>(rows)};
  return make_op<S>(dims, std::move(v), {x},
                    [group](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {repeat_last(g, group)};
                    });
}

// [..] -> [.., n] with each entry repeated n times.
template <typename S>
Tensor<S> repeat_last(const Tensor<S>& x, int n) {
  if (n <= 0) throw ValidationError("repeat_last: bad n");
  ArrayX<S> v(x.numel() * n);
  const auto& xv = x.value();
  for (std::int64_t i = 0; i < xv.size(); ++i)
    v.segment(i * n, n).setConstant(xv[i]);
  Dims dims = x.dims();
  dims.push_back(n);
  return make_op<S>(dims, std::move(v), {x},
                    [n](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {sum_last(g, n)};
                    });
}

template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& v, int m);

// Column sums of a row-major [m, n] tensor -> [n].
template <typename S>
Tensor<S> colsum(const Tensor<S>& x) {
  if (x.dims().size() != 2) throw ValidationError("colsum needs [m,n]");
  const int m = x.dims()[0], n = x.dims()[1];
  ArrayX<S> v = ArrayX<S>::Zero(n);
  const auto& xv = x.value();
  for (int r = 0; r < m; ++r) v += xv.segment(std::int64_t(r) * n, n);
  return make_op<S>({n}, std::move(v), {x},
                    [m](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {broadcast_rows(g, m)};
                    });
}

template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& v, int m) {
  const int n = static_cast<int>(v.numel());
  ArrayX<S> out(std::int64_t(m) * n);
  for (int r = 0; r < m; ++r) out.segment(std::int64_t(r) * n, n) = v.value();
  return make_op<S>({m, n}, std::move(out), {v},
                    [](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {colsum(g)};
                    });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Dims dims) {
  if (dims_numel(dims) != x.numel())
    throw ValidationError("reshape: numel mismatch");
  Dims old = x.dims();
  return make_op<S>(std::move(dims), ArrayX<S>(x.value()), {x},
                    [old](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {reshape(g, old)};
                    });
}

template <typename S>
Tensor<S> pad_rows(const Tensor<S>& x, int total_rows, int row_off);

// Rows [off, off+len) of a tensor whose first axis has m rows.
template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, int off, int len) {
  if (x.dims().empty()) throw ValidationError("slice_rows needs an axis");
  const int m = x.dims()[0];
  if (off < 0 || len < 0 || off + len > m)
    throw ValidationError("slice_rows: range out of bounds");
  const std::int64_t stride = x.numel() / m;
  ArrayX<S> v = x.value().segment(off * stride, std::int64_t(len) * stride);
  Dims dims = x.dims();
  dims[0] = len;
  return make_op<S>(dims, std::move(v), {x},
                    [m, off](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {pad_rows(g, m, off)};
                    });
}

template <typename S>
Tensor<S> pad_rows(const Tensor<S>& x, int total_rows, int row_off) {
  const int len = x.dims()[0];
  const std::int64_t stride = x.numel() / len;
  ArrayX<S> v = ArrayX<S>::Zero(total_rows * stride);
  v.segment(row_off * stride, std::int64_t(len) * stride) = x.value();
  Dims dims = x.dims();
  dims[0] = total_rows;
  return make_op<S>(dims, std::move(v), {x},
                    [row_off, len](const Tensor<S>& g) {
                      return std::vector<Tensor<S>>{slice_rows(g, row_off, len)};
                    });
}

template <typename S>
Tensor<S> pad_cols(const Tensor<S>& x, int total_cols, int col_off);

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, int off, int len) {
  if (x.dims().size() != 2) throw ValidationError("slice_cols needs [m,n]");
  const int m = x.dims()[0], n = x.dims()[1];
  if (off < 0 || len < 0 || off + len > n)
    throw ValidationError("slice_cols: range out of bounds");
  ArrayX<S> v(std::int64_t(m) * len);
  for (int r = 0; r < m; ++r)
    v.segment(std::int64_t(r) * len, len) =
        x.value().segment(std::int64_t(r) * n + off, len);
  return make_op<S>({m, len}, std::move(v), {x},
                    [n, off](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {pad_cols(g, n, off)};
                    });
}

template <typename S>
Tensor<S> pad_cols(const Tensor<S>& x, int total_cols, int col_off) {
  const int m = x.dims()[0], len = x.dims()[1];
  ArrayX<S> v = ArrayX<S>::Zero(std::int64_t(m) * total_cols);
  for (int r = 0; r < m; ++r)
    v.segment(std::int64_t(r) * total_cols + col_off, len) =
        x.value().segment(std::int64_t(r) * len, len);
  return make_op<S>({m, total_cols}, std::move(v), {x},
                    [col_off, len](const Tensor<S>& g) {
                      return std::vector<Tensor<S>>{slice_cols(g, col_off, len)};
                    });
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: empty");
  const int m = parts[0].dims()[0];
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p.dims().size() != 2 || p.dims()[0] != m)
      throw ValidationError("concat_cols: row mismatch");
    widths.push_back(p.dims()[1]);
    total += p.dims()[1];
  }
  ArrayX<S> v(std::int64_t(m) * total);
  int off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const int w = widths[i];
    for (int r = 0; r < m; ++r)
      v.segment(std::int64_t(r) * total + off, w) =
          parts[i].value().segment(std::int64_t(r) * w, w);
    off += w;
  }
  return make_op<S>({m, total}, std::move(v), parts,
                    [widths](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      std::vector<Tensor<S>> out;
                      int off = 0;
                      for (int w : widths) {
                        out.push_back(slice_cols(g, off, w));
                        off += w;
                      }
                      return out;
                    });
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: empty");
  Dims tail(parts[0].dims().begin() + 1, parts[0].dims().end());
  std::int64_t total = 0;
  std::vector<int> lens;
  for (const auto& p : parts) {
    lens.push_back(p.dims()[0]);
    total += p.numel();
  }
  ArrayX<S> v(total);
  std::int64_t off = 0;
  for (const auto& p : parts) {
    v.segment(off, p.numel()) = p.value();
    off += p.numel();
  }
  Dims dims;
  int rows = 0;
  for (int l : lens) rows += l;
  dims.push_back(rows);
  dims.insert(dims.end(), tail.begin(), tail.end());
  return make_op<S>(dims, std::move(v), parts,
                    [lens](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      std::vector<Tensor<S>> out;
                      int off = 0;
                      for (int l : lens) {
                        out.push_back(slice_rows(g, off, l));
                        off += l;
                      }
                      return out;
                    });
}

// ---------------------------------------------------------------------------
// matrix ops

template <typename S>
using RowMat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.dims().size() != 2) throw ValidationError("transpose needs [m,n]");
  const int m = x.dims()[0], n = x.dims()[1];
  ArrayX<S> v(x.numel());
  Eigen::Map<RowMat<S>>(v.data(), n, m) =
      Eigen::Map<const RowMat<S>>(x.value().data(), m, n).transpose();
  return make_op<S>({n, m}, std::move(v), {x},
                    [](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {transpose(g)};
                    });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.dims().size() != 2 || b.dims().size() != 2 ||
      a.dims()[1] != b.dims()[0])
    throw ValidationError("matmul: incompatible shapes");
  const int m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  ArrayX<S> v(std::int64_t(m) * n);
  Eigen::Map<RowMat<S>>(v.data(), m, n).noalias() =
      Eigen::Map<const RowMat<S>>(a.value().data(), m, k) *
      Eigen::Map<const RowMat<S>>(b.value().data(), k, n);
  return make_op<S>({m, n}, std::move(v), {a, b},
                    [a, b](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {matmul(g, transpose(b)), matmul(transpose(a), g)};
                    });
}

// ---------------------------------------------------------------------------
// gather / scatter

struct IndexPlan {
  std::vector<std::int64_t> idx;  // output position -> source index, -1 = 0
  Dims out_dims;
  std::int64_t src_numel = 0;
};
using IndexPlanPtr = std::shared_ptr<const IndexPlan>;

template <typename S>
Tensor<S> scatter_add(const Tensor<S>& x, const IndexPlanPtr& plan,
                      Dims src_dims);

template <typename S>
Tensor<S> gather(const Tensor<S>& x, const IndexPlanPtr& plan) {
  if (x.numel() != plan->src_numel)
    throw ValidationError("gather: plan does not match source size");
  ArrayX<S> v(static_cast<std::int64_t>(plan->idx.size()));
  const auto& xv = x.value();
  const auto& idx = plan->idx;
  for (std::size_t i = 0; i < idx.size(); ++i)
    v[static_cast<std::int64_t>(i)] = idx[i] < 0 ? S(0) : xv[idx[i]];
  Dims src_dims = x.dims();
  return make_op<S>(plan->out_dims, std::move(v), {x},
                    [plan, src_dims](const Tensor<S>& g) {
                      return std::vector<Tensor<S>>{
                          scatter_add(g, plan, src_dims)};
                    });
}

template <typename S>
Tensor<S> scatter_add(const Tensor<S>& x, const IndexPlanPtr& plan,
                      Dims src_dims) {
  if (x.numel() != static_cast<std::int64_t>(plan->idx.size()))
    throw ValidationError("scatter_add: plan does not match input size");
  ArrayX<S> v = ArrayX<S>::Zero(plan->src_numel);
  const auto& xv = x.value();
  const auto& idx = plan->idx;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (idx[i] >= 0) v[idx[i]] += xv[static_cast<std::int64_t>(i)];
  return make_op<S>(std::move(src_dims), std::move(v), {x},
                    [plan](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {gather(g, plan)};
                    });
}

// ---------------------------------------------------------------------------
// channels-last image ops (feature maps as [n, h, w, c])

namespace detail_nhwc {

// forward: rows (n,y,x) hold the kxk neighborhood as (dy, dx, c) runs;
// borders are zero. dx-adjacent taps are contiguous (stride c), so each
// (row, dy) copies one run of up to k*c floats.
template <typename S>
void im2col_forward(const S* x, S* out, int n, int h, int w, int c, int k) {
  const int pad = k / 2;
  const std::int64_t row_len = std::int64_t(k) * k * c;
  std::int64_t r = 0;
  for (int img = 0; img < n; ++img) {
    const S* base = x + std::int64_t(img) * h * w * c;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx, ++r) {
        S* dst = out + r * row_len;
        for (int dy = 0; dy < k; ++dy) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + k * c, S(0));
            dst += k * c;
            continue;
          }
          const int x0 = xx - pad;
          const int lo = std::max(0, -x0);
          const int hi = std::min(k, w - x0);
          if (lo > 0) std::fill(dst, dst + lo * c, S(0));
          if (hi > lo)
            std::copy(base + (std::int64_t(sy) * w + x0 + lo) * c,
                      base + (std::int64_t(sy) * w + x0 + hi) * c,
                      dst + lo * c);
          if (hi < k) std::fill(dst + hi * c, dst + k * c, S(0));
          dst += k * c;
        }
      }
  }
}

template <typename S>
void im2col_backward(const S* g, S* gx, int n, int h, int w, int c, int k) {
  const int pad = k / 2;
  const std::int64_t row_len = std::int64_t(k) * k * c;
  std::int64_t r = 0;
  for (int img = 0; img < n; ++img) {
    S* base = gx + std::int64_t(img) * h * w * c;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx, ++r) {
        const S* src = g + r * row_len;
        for (int dy = 0; dy < k; ++dy) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= h) {
            src += k * c;
            continue;
          }
          const int x0 = xx - pad;
          const int lo = std::max(0, -x0);
          const int hi = std::min(k, w - x0);
          S* dst = base + (std::int64_t(sy) * w + x0 + lo) * c;
          const S* s = src + lo * c;
          for (int t = 0; t < (hi - lo) * c; ++t) dst[t] += s[t];
          src += k * c;
        }
      }
  }
}

}  // namespace detail_nhwc

template <typename S>
Tensor<S> im2col_nhwc(const Tensor<S>& x, int k);

// Adjoint of im2col_nhwc: [n*h*w, k*k*c] -> [n, h, w, c].
template <typename S>
Tensor<S> col2im_nhwc(const Tensor<S>& g, Dims img_dims, int k) {
  ArrayX<S> gx = ArrayX<S>::Zero(dims_numel(img_dims));
  detail_nhwc::im2col_backward(g.value().data(), gx.data(), img_dims[0],
                               img_dims[1], img_dims[2], img_dims[3], k);
  return make_op<S>(img_dims, std::move(gx), {g},
                    [k](const Tensor<S>& gg) -> std::vector<Tensor<S>> {
                      return {im2col_nhwc(gg, k)};
                    });
}

// x: [n, h, w, c] -> [n*h*w, k*k*c]; same padding, stride 1.
template <typename S>
Tensor<S> im2col_nhwc(const Tensor<S>& x, int k) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("im2col_nhwc expects [n,h,w,c]");
  const int n = d[0], h = d[1], w = d[2], c = d[3];
  ArrayX<S> v(std::int64_t(n) * h * w * k * k * c);
  detail_nhwc::im2col_forward(x.value().data(), v.data(), n, h, w, c, k);
  Dims xd = d;
  return make_op<S>({n * h * w, k * k * c}, std::move(v), {x},
                    [xd, k](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {col2im_nhwc(g, xd, k)};
                    });
}

template <typename S>
Tensor<S> untile_rows(const Tensor<S>& g, int n, int m, int c);

// [n, c] -> [n*m, c], each sample's row tiled m times.
template <typename S>
Tensor<S> tile_rows(const Tensor<S>& s, int m) {
  const auto& d = s.dims();
  if (d.size() != 2) throw ValidationError("tile_rows expects [n,c]");
  const int n = d[0], c = d[1];
  ArrayX<S> v(std::int64_t(n) * m * c);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < m; ++t)
      v.segment((std::int64_t(i) * m + t) * c, c) =
          s.value().segment(std::int64_t(i) * c, c);
  return make_op<S>({n * m, c}, std::move(v), {s},
                    [n, m, c](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {untile_rows(g, n, m, c)};
                    });
}

// [n*m, c] -> [n, c], summing each sample's m tiles. Backward of tile_rows.
template <typename S>
Tensor<S> untile_rows(const Tensor<S>& g, int n, int m, int c) {
  ArrayX<S> v = ArrayX<S>::Zero(std::int64_t(n) * c);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < m; ++t)
      v.segment(std::int64_t(i) * c, c) +=
          g.value().segment((std::int64_t(i) * m + t) * c, c);
  return make_op<S>({n, c}, std::move(v), {g},
                    [m](const Tensor<S>& gg) -> std::vector<Tensor<S>> {
                      return {tile_rows(gg, m)};
                    });
}

template <typename S>
Tensor<S> rows_scale(const Tensor<S>& x, const Tensor<S>& s, int hw);
template <typename S>
Tensor<S> rows_reduce_dot(const Tensor<S>& a, const Tensor<S>& b, int n,
                          int hw, int c);

namespace detail_rows {
template <typename S>
using CMat = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>;
template <typename S>
using MMat =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
}  // namespace detail_rows

// y[(n,p),c] = x[(n,p),c] * s[n,c] for p in [0,hw): per-sample per-channel
// scaling of channels-last feature rows, fused into one pass.
template <typename S>
Tensor<S> rows_scale(const Tensor<S>& x, const Tensor<S>& s, int hw) {
  const int n = s.dims()[0], c = s.dims()[1];
  if (x.numel() != std::int64_t(n) * hw * c)
    throw ValidationError("rows_scale: shape mismatch");
  ArrayX<S> v(x.numel());
  for (int i = 0; i < n; ++i) {
    detail_rows::CMat<S> xb(x.value().data() + std::int64_t(i) * hw * c, hw, c);
    detail_rows::MMat<S> yb(v.data() + std::int64_t(i) * hw * c, hw, c);
    yb = xb.array().rowwise() *
         Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>>(
             s.value().data() + std::int64_t(i) * c, c);
  }
  return make_op<S>(x.dims(), std::move(v), {x, s},
                    [x, s, n, hw, c](const Tensor<S>& g)
                        -> std::vector<Tensor<S>> {
                      return {rows_scale(g, s, hw),
                              rows_reduce_dot(g, x, n, hw, c)};
                    });
}

// out[n,c] = sum_p a[(n,p),c] * b[(n,p),c]
template <typename S>
Tensor<S> rows_reduce_dot(const Tensor<S>& a, const Tensor<S>& b, int n,
                          int hw, int c) {
  check_same_numel(a, b, "rows_reduce_dot");
  if (a.numel() != std::int64_t(n) * hw * c)
    throw ValidationError("rows_reduce_dot: shape mismatch");
  ArrayX<S> v = ArrayX<S>::Zero(std::int64_t(n) * c);
  for (int i = 0; i < n; ++i) {
    detail_rows::CMat<S> ab(a.value().data() + std::int64_t(i) * hw * c, hw, c);
    detail_rows::CMat<S> bb(b.value().data() + std::int64_t(i) * hw * c, hw, c);
    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(
        v.data() + std::int64_t(i) * c, c) =
        (ab.array() * bb.array()).colwise().sum();
  }
  return make_op<S>({n, c}, std::move(v), {a, b},
                    [a, b, hw](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {rows_scale(b, g, hw), rows_scale(a, g, hw)};
                    });
}

// out[n,c] = sum_p g[(n,p),c], explicit sizes.
template <typename S>
Tensor<S> rows_reduce_sized(const Tensor<S>& g, int n, int hw, int c) {
  ArrayX<S> v(std::int64_t(n) * c);
  for (int i = 0; i < n; ++i) {
    detail_rows::CMat<S> gb(g.value().data() + std::int64_t(i) * hw * c, hw, c);
    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(
        v.data() + std::int64_t(i) * c, c) = gb.colwise().sum();
  }
  return make_op<S>({n, c}, std::move(v), {g},
                    [hw](const Tensor<S>& gg) -> std::vector<Tensor<S>> {
                      return {tile_rows(gg, hw)};
                    });
}

// y = x + tile(t): per-sample per-channel shift.
template <typename S>
Tensor<S> rows_add(const Tensor<S>& x, const Tensor<S>& t, int hw) {
  const int n = t.dims()[0], c = t.dims()[1];
  if (x.numel() != std::int64_t(n) * hw * c)
    throw ValidationError("rows_add: shape mismatch");
  ArrayX<S> v(x.numel());
  for (int i = 0; i < n; ++i) {
    detail_rows::CMat<S> xb(x.value().data() + std::int64_t(i) * hw * c, hw, c);
    detail_rows::MMat<S> yb(v.data() + std::int64_t(i) * hw * c, hw, c);
    yb = xb.array().rowwise() +
         Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>>(
             t.value().data() + std::int64_t(i) * c, c);
  }
  return make_op<S>(x.dims(), std::move(v), {x, t},
                    [n, hw, c](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {g, rows_reduce_sized(g, n, hw, c)};
                    });
}

// y = x*W + b in one pass (bias folded into the GEMM output).
template <typename S>
Tensor<S> linear_fused(const Tensor<S>& x, const Tensor<S>& w,
                       const Tensor<S>& b) {
  if (x.dims().size() != 2 || w.dims().size() != 2 ||
      x.dims()[1] != w.dims()[0] || b.numel() != w.dims()[1])
    throw ValidationError("linear_fused: incompatible shapes");
  const int m = x.dims()[0], k = x.dims()[1], n = w.dims()[1];
  ArrayX<S> v(std::int64_t(m) * n);
  Eigen::Map<RowMat<S>> out(v.data(), m, n);
  out.noalias() = Eigen::Map<const RowMat<S>>(x.value().data(), m, k) *
                  Eigen::Map<const RowMat<S>>(w.value().data(), k, n);
  out.rowwise() +=
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data(),
                                                            n);
  return make_op<S>({m, n}, std::move(v), {x, w, b},
                    [x, w](const Tensor<S>& g) -> std::vector<Tensor<S>> {
                      return {matmul(g, transpose(w)), matmul(transpose(x), g),
                              colsum(g)};
                    });
}

// [n, h, w, c] -> [n, 2h, 2w, c] nearest neighbor.
template <typename S>
Tensor<S> upsample2x_nhwc(const Tensor<S>& x) {
  const auto& d = x.dims();
  if (d.size() != 4) throw ValidationError("upsample2x_nhwc expects nhwc");
  const int n = d[0], h = d[1], w = d[2], c = d[3];
  ArrayX<S> v(std::int64_t(n) * 4 * h * w * c);
  for (int img = 0; img < n; ++img)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        v.segment(((std::int64_t(img) * 2 * h + y) * 2 * w + xx) * c, c) =
            x.value().segment(
                ((std::int64_t(img) * h + y / 2) * w + xx / 2) * c, c);
  return make_op<S>(
      {n, 2 * h, 2 * w, c}, std::move(v), {x},
      [n, h, w, c](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        ArrayX<S> gx = ArrayX<S>::Zero(std::int64_t(n) * h * w * c);
        for (int img = 0; img < n; ++img)
          for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
              gx.segment(((std::int64_t(img) * h + y / 2) * w + xx / 2) * c,
                         c) +=
                  g.value().segment(
                      ((std::int64_t(img) * 2 * h + y) * 2 * w + xx) * c, c);
        return {make_op<S>({n, h, w, c}, std::move(gx), {g},
                           [](const Tensor<S>& gg) -> std::vector<Tensor<S>> {
                             return {upsample2x_nhwc(gg)};
                           })};
      });
}

// [n, h, w, c] -> [n, h/2, w/2, c] mean pooling.
template <typename S>
Tensor<S> avgpool2x_nhwc(const Tensor<S>& x) {
  const auto& d = x.dims();
  if (d.size() != 4 || d[1] % 2 || d[2] % 2)
    throw ValidationError("avgpool2x_nhwc: bad shape");
  const int n = d[0], h = d[1], w = d[2], c = d[3];
  const int ho = h / 2, wo = w / 2;
  ArrayX<S> v = ArrayX<S>::Zero(std::int64_t(n) * ho * wo * c);
  for (int img = 0; img < n; ++img)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        v.segment(((std::int64_t(img) * ho + y / 2) * wo + xx / 2) * c, c) +=
            x.value().segment(((std::int64_t(img) * h + y) * w + xx) * c, c);
  v *= S(0.25);
  return make_op<S>(
      {n, ho, wo, c}, std::move(v), {x},
      [n, h, w, c, ho, wo](const Tensor<S>& g) -> std::vector<Tensor<S>> {
        ArrayX<S> gx(std::int64_t(n) * h * w * c);
        for (int img = 0; img < n; ++img)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              gx.segment(((std::int64_t(img) * h + y) * w + xx) * c, c) =
                  S(0.25) *
                  g.value().segment(
                      ((std::int64_t(img) * ho + y / 2) * wo + xx / 2) * c, c);
        return {make_op<S>({n, h, w, c}, std::move(gx), {g},
                           [](const Tensor<S>& gg) -> std::vector<Tensor<S>> {
                             return {avgpool2x_nhwc(gg)};
                           })};
      });
}

// ---------------------------------------------------------------------------
// small conveniences

template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  return sum_all(mul(a, b));
}

template <typename S>
Tensor<S> sum_squares(const Tensor<S>& x) {
  return sum_all(mul(x, x));
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) {
  return div(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S c) {
  return mul_scalar(a, c);
}
template <typename S>
Tensor<S> operator*(S c, const Tensor<S>& a) {
  return mul_scalar(a, c);
}
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, S c) {
  return add_scalar(a, c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, S c) {
  return add_scalar(a, -c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a) {
  return neg(a);
}

namespace detail {
template <typename S>
Tensor<S> add_grads(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
}  // namespace detail

}  // namespace fgan::ad
