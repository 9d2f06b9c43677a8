#include "factorgan/ad/nn.hpp"

#include <array>
#include <map>
#include <mutex>

namespace fgan::ad {

namespace {

using Key = std::array<int, 7>;

IndexPlanPtr cache_lookup(int tag, const Key& key,
                          const std::function<IndexPlanPtr()>& build) {
  static std::mutex mu;
  static std::map<std::pair<int, Key>, IndexPlanPtr> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto full_key = std::make_pair(tag, key);
  auto it = cache.find(full_key);
  if (it != cache.end()) return it->second;
  auto plan = build();
  cache.emplace(full_key, plan);
  return plan;
}

}  // namespace

IndexPlanPtr im2col_plan(int n, int c, int h, int w, int k, int pad) {
  return cache_lookup(0, {n, c, h, w, k, pad, 0}, [&] {
    auto plan = std::make_shared<IndexPlan>();
    plan->src_numel = std::int64_t(n) * c * h * w;
    plan->out_dims = {n * h * w, c * k * k};
    plan->idx.resize(std::int64_t(n) * h * w * c * k * k);
    std::int64_t o = 0;
    for (int img = 0; img < n; ++img)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int ch = 0; ch < c; ++ch)
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) {
                const int sy = y + dy - pad;
                const int sx = x + dx - pad;
                plan->idx[o++] =
                    (sy < 0 || sy >= h || sx < 0 || sx >= w)
                        ? -1
                        : (((std::int64_t(img) * c + ch) * h + sy) * w + sx);
              }
    return plan;
  });
}

IndexPlanPtr conv_perm_plan(int n, int co, int h, int w) {
  return cache_lookup(1, {n, co, h, w, 0, 0, 0}, [&] {
    auto plan = std::make_shared<IndexPlan>();
    plan->src_numel = std::int64_t(n) * h * w * co;
    plan->out_dims = {n, co, h, w};
    plan->idx.resize(plan->src_numel);
    std::int64_t o = 0;
    for (int img = 0; img < n; ++img)
      for (int ch = 0; ch < co; ++ch)
        for (int p = 0; p < h * w; ++p)
          plan->idx[o++] = (std::int64_t(img) * h * w + p) * co + ch;
    return plan;
  });
}

IndexPlanPtr upsample2_plan(int n, int c, int h, int w) {
  return cache_lookup(2, {n, c, h, w, 0, 0, 0}, [&] {
    auto plan = std::make_shared<IndexPlan>();
    plan->src_numel = std::int64_t(n) * c * h * w;
    plan->out_dims = {n, c, 2 * h, 2 * w};
    plan->idx.resize(plan->src_numel * 4);
    std::int64_t o = 0;
    for (int img = 0; img < n; ++img)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
          for (int x = 0; x < 2 * w; ++x)
            plan->idx[o++] =
                ((std::int64_t(img) * c + ch) * h + y / 2) * w + x / 2;
    return plan;
  });
}

IndexPlanPtr avgpool_quad_plan(int n, int c, int h, int w) {
  return cache_lookup(3, {n, c, h, w, 0, 0, 0}, [&] {
    auto plan = std::make_shared<IndexPlan>();
    plan->src_numel = std::int64_t(n) * c * h * w;
    const int ho = h / 2, wo = w / 2;
    plan->out_dims = {n * c * ho * wo, 4};
    plan->idx.resize(plan->src_numel);
    std::int64_t o = 0;
    for (int img = 0; img < n; ++img)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y)
          for (int x = 0; x < wo; ++x) {
            const std::int64_t base = (std::int64_t(img) * c + ch) * h;
            plan->idx[o++] = (base + 2 * y) * w + 2 * x;
            plan->idx[o++] = (base + 2 * y) * w + 2 * x + 1;
            plan->idx[o++] = (base + 2 * y + 1) * w + 2 * x;
            plan->idx[o++] = (base + 2 * y + 1) * w + 2 * x + 1;
          }
    return plan;
  });
}

}  // namespace fgan::ad
