#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "factorgan/core/common.hpp"

namespace fgan::ad {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

using Dims = std::vector<int>;

inline std::int64_t dims_numel(const Dims& d) {
  std::int64_t n = 1;
  for (int x : d) n *= x;
  return n;
}

template <typename S>
class Tensor;

template <typename S>
using BackwardFn =
    std::function<std::vector<Tensor<S>>(const Tensor<S>& grad_out)>;

template <typename S>
struct Node {
  ArrayX<S> value;
  Dims dims;
  bool needs_grad = false;  // true if this node or an ancestor wants grads
  bool is_param = false;    // leaf created with requires_grad
  std::vector<Tensor<S>> parents;
  BackwardFn<S> backward;
  ArrayX<S> grad;  // leaf accumulator, sized lazily by ad::backward
  std::string name;
};

// Thread-local tape switch. Ops always compute values eagerly; they only
// attach parents/backward closures while recording is on.
inline bool& recording_flag() {
  thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(recording_flag()) { recording_flag() = false; }
  ~NoGradGuard() { recording_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct RecordGuard {
  bool prev;
  explicit RecordGuard(bool on) : prev(recording_flag()) {
    recording_flag() = on;
  }
  ~RecordGuard() { recording_flag() = prev; }
  RecordGuard(const RecordGuard&) = delete;
  RecordGuard& operator=(const RecordGuard&) = delete;
};

// Value-semantic handle to a tape node.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Dims dims, ArrayX<S> value, bool requires_grad = false,
                     std::string name = "") {
    if (value.size() != dims_numel(dims))
      throw ValidationError("tensor value size does not match dims");
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->dims = std::move(dims);
    n->needs_grad = requires_grad;
    n->is_param = requires_grad;
    n->name = std::move(name);
    return Tensor(std::move(n));
  }

  static Tensor constant(Dims dims, ArrayX<S> value) {
    return leaf(std::move(dims), std::move(value), false);
  }

  static Tensor scalar(S v) {
    ArrayX<S> a(1);
    a[0] = v;
    return constant({1}, std::move(a));
  }

  static Tensor zeros(Dims dims) {
    return constant(dims, ArrayX<S>::Zero(dims_numel(dims)));
  }

  static Tensor ones(Dims dims) {
    return constant(dims, ArrayX<S>::Constant(dims_numel(dims), S(1)));
  }

  bool defined() const { return static_cast<bool>(n_); }
  const ArrayX<S>& value() const { return n_->value; }
  const Dims& dims() const { return n_->dims; }
  std::int64_t numel() const { return n_->value.size(); }
  bool needs_grad() const { return n_ && n_->needs_grad; }
  bool is_param() const { return n_ && n_->is_param; }
  const std::string& name() const { return n_->name; }

  // Leaf gradient accumulated by ad::backward.
  ArrayX<S>& grad() {
    ensure_grad();
    return n_->grad;
  }
  const ArrayX<S>& grad() const {
    const_cast<Tensor*>(this)->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (n_) n_->grad = ArrayX<S>::Zero(n_->value.size());
  }

  // In-place value update for optimizers; only sane on leaves.
  ArrayX<S>& mutable_value() { return n_->value; }

  S item() const {
    if (numel() != 1) throw ValidationError("item() on non-scalar tensor");
    return n_->value[0];
  }

  Node<S>* node() const { return n_.get(); }

  friend Tensor make_op_tensor(Dims dims, ArrayX<S> value,
                               std::vector<Tensor> parents,
                               BackwardFn<S> backward) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->dims = std::move(dims);
    if (recording_flag()) {
      bool any = false;
      for (const auto& p : parents)
        if (p.defined() && p.needs_grad()) any = true;
      if (any) {
        n->needs_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward);
      }
    }
    return Tensor(std::move(n));
  }

 private:
  explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}
  void ensure_grad() {
    if (n_ && n_->grad.size() != n_->value.size())
      n_->grad = ArrayX<S>::Zero(n_->value.size());
  }
  std::shared_ptr<Node<S>> n_;
};

template <typename S>
Tensor<S> make_op(Dims dims, ArrayX<S> value, std::vector<Tensor<S>> parents,
                  BackwardFn<S> backward) {
  return make_op_tensor(std::move(dims), std::move(value), std::move(parents),
                        std::move(backward));
}

namespace detail {

// Reverse topological order over the needs_grad subgraph.
template <typename S>
std::vector<Node<S>*> topo_order(Node<S>* root) {
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next].node();
      ++next;
      if (p && node->parents[next - 1].needs_grad() && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children; iterate in reverse
}

template <typename S>
Tensor<S> add_grads(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
std::unordered_map<Node<S>*, Tensor<S>> run_backward(const Tensor<S>& root,
                                                     bool create_graph) {
  if (!root.defined()) throw ValidationError("backward on undefined tensor");
  std::unordered_map<Node<S>*, Tensor<S>> gmap;
  gmap.emplace(root.node(),
               Tensor<S>::ones(root.dims()));
  if (!root.needs_grad()) return gmap;

  auto order = topo_order<S>(root.node());
  RecordGuard rec(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    auto found = gmap.find(node);
    if (found == gmap.end() || !node->backward) continue;
    const Tensor<S>& gout = found->second;
    std::vector<Tensor<S>> gs = node->backward(gout);
    if (gs.size() != node->parents.size())
      throw Error("backward returned wrong arity for op");
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const Tensor<S>& p = node->parents[i];
      if (!p.defined() || !p.needs_grad() || !gs[i].defined()) continue;
      auto slot = gmap.find(p.node());
      if (slot == gmap.end())
        gmap.emplace(p.node(), gs[i]);
      else
        slot->second = add_grads(slot->second, gs[i]);
    }
  }
  return gmap;
}

}  // namespace detail

// Accumulates gradients of `root` (summed over all entries if non-scalar)
// into the .grad of every reachable parameter leaf.
template <typename S>
void backward(const Tensor<S>& root) {
  auto gmap = detail::run_backward(root, /*create_graph=*/false);
  for (auto& [node, g] : gmap) {
    if (!node->is_param) continue;
    if (node->grad.size() != node->value.size())
      node->grad = ArrayX<S>::Zero(node->value.size());
    node->grad += g.value();
  }
}

// Gradients of `root` w.r.t. the given tensors, without touching leaf
// accumulators. With create_graph the returned tensors are differentiable.
template <typename S>
std::vector<Tensor<S>> grad(const Tensor<S>& root,
                            const std::vector<Tensor<S>>& wrt,
                            bool create_graph = false) {
  auto gmap = detail::run_backward(root, create_graph);
  std::vector<Tensor<S>> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) {
    auto it = gmap.find(t.node());
    if (it == gmap.end())
      out.push_back(Tensor<S>::zeros(t.dims()));
    else
      out.push_back(it->second);
  }
  return out;
}

}  // namespace fgan::ad
