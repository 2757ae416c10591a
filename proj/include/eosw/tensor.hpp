// Copyright 2026 The eosw Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// Dense row-major tensors with a reverse-mode autodiff tape.
///
/// A Tensor is a cheap handle onto a shared graph node. Ops in ops.hpp build
/// new nodes and register a backward closure; Tensor::backward() runs those
/// closures once each, in reverse topological order.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eosw/error.hpp"

namespace eosw {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline thread_local int no_grad_depth = 0;

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> data(numel(shape), T(0));
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> data(numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.back(); }
  std::uint64_t id() const { return node_->id; }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->data; }
  /// Direct write access, for optimizers and initialization of leaf tensors.
  std::span<T> mutable_data() { return node_->data; }
  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  /// Back-propagates from this tensor, seeding d(self)/d(self) = 1.
  /// Returns the number of graph nodes visited.
  std::size_t backward() const {
    if (size() != 1) {
      throw DimensionError("backward() needs a scalar root, got " + shape_str(shape()));
    }
    return backward_with_seed(std::vector<T>{T(1)});
  }

  std::size_t backward_with_seed(std::span<const T> seed) const {
    if (seed.size() != size()) throw DimensionError("backward seed size mismatch");
    auto order = topological_order();
    auto g = node_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeT* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    return order.size();
  }

  const std::shared_ptr<NodeT>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

 private:
  // Post-order DFS over parents; parents are visited in registration order so
  // the resulting order, and every gradient accumulation, is deterministic.
  std::vector<NodeT*> topological_order() const {
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        NodeT* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<NodeT> node_;
};

/// Builds the result node of an op. The backward closure is only kept when
/// grad mode is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(detail::Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& t : inputs) node.parents.push_back(t.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

/// Gradient buffer of parent `index`; empty when that parent is not tracked.
template <typename T>
std::span<T> parent_grad(detail::Node<T>& node, std::size_t index) {
  auto& p = node.parents.at(index);
  if (!p->requires_grad) return {};
  return p->ensure_grad();
}

}  // namespace eosw
