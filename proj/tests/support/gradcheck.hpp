#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "factorgan/ad/ops.hpp"

namespace fgan::testing {

// Largest relative error between backward() gradients and central finite
// differences of a scalar-valued graph builder. `f` must rebuild the graph
// from the given leaves on every call. Components where both sides are
// below `dead_zone` in magnitude are treated as matching.
template <typename S>
double max_grad_rel_err(
    const std::function<ad::Tensor<S>()>& f,
    std::vector<ad::Tensor<S>> leaves, double h = 1e-5,
    double dead_zone = 1e-7,
    const std::vector<std::vector<int>>* subsets = nullptr) {
  for (auto& l : leaves) l.zero_grad();
  ad::Tensor<S> loss = f();
  ad::backward(loss);

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    std::vector<int> indices;
    if (subsets && li < subsets->size() && !(*subsets)[li].empty()) {
      indices = (*subsets)[li];
    } else {
      indices.resize(leaf.numel());
      for (int i = 0; i < leaf.numel(); ++i) indices[i] = i;
    }
    for (int i : indices) {
      const S orig = leaf.mutable_value()[i];
      leaf.mutable_value()[i] = orig + static_cast<S>(h);
      const double fp = static_cast<double>(f().item());
      leaf.mutable_value()[i] = orig - static_cast<S>(h);
      const double fm = static_cast<double>(f().item());
      leaf.mutable_value()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double adv = static_cast<double>(leaf.grad()[i]);
      const double mag = std::max(std::abs(fd), std::abs(adv));
      if (mag < dead_zone) continue;
      worst = std::max(worst, std::abs(fd - adv) / mag);
    }
  }
  return worst;
}

}  // namespace fgan::testing
