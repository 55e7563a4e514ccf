// Copyright (c) the cotta project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COTTA_CORE_TENSOR_HPP_
#define COTTA_CORE_TENSOR_HPP_

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "cotta/core/error.hpp"

namespace cotta {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

inline std::atomic<uint64_t>& node_counter() {
  static std::atomic<uint64_t> counter{1};
  return counter;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// One recorded value in the computation graph. `seq` is a globally
// monotone creation index, so parents always order before children and
// a descending sort over reachable nodes is a reverse topological order.
template <typename S>
struct Node {
  Shape shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates this->grad into parents

  Node() : seq(node_counter().fetch_add(1, std::memory_order_relaxed)) {}

  void accumulate(const ArrayX<S>& delta) {
    if (grad.size() == 0) grad = ArrayX<S>::Zero(value.size());
    grad += delta;
  }
};

}  // namespace detail

// Disables gradient recording for the enclosing scope. Forward passes of
// frozen models (teacher, source) run under this guard.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

// Dense n-dimensional array of scalars, row-major flat storage, with
// optional participation in reverse-mode differentiation. Copying a Tensor
// copies the handle, not the storage; use clone() for a value copy.
template <typename S>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  Tensor() = default;

  Tensor(Shape shape, ArrayX<S> values) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_to_string(shape));
    }
    node_ = std::make_shared<detail::Node<S>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }

  static Tensor zeros(Shape shape) {
    ArrayX<S> a = ArrayX<S>::Zero(shape_numel(shape));
    return Tensor(std::move(shape), std::move(a));
  }

  static Tensor full(Shape shape, S v) {
    ArrayX<S> a = ArrayX<S>::Constant(shape_numel(shape), v);
    return Tensor(std::move(shape), std::move(a));
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from(Shape shape, const std::vector<S>& values) {
    ArrayX<S> a(values.size());
    for (size_t i = 0; i < values.size(); ++i) a[static_cast<int64_t>(i)] = values[i];
    return Tensor(std::move(shape), std::move(a));
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return node_->value.size(); }

  ArrayX<S>& array() { return node_->value; }
  const ArrayX<S>& array() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }

  S operator[](int64_t i) const { return node_->value[i]; }

  // Scalar extraction; the tensor must hold exactly one element.
  S value() const {
    if (numel() != 1) {
      throw ContractError("value() called on non-scalar tensor of shape " +
                          shape_to_string(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return node_ && node_->grad.size() > 0; }

  const ArrayX<S>& grad() const {
    if (!has_grad()) {
      throw ContractError("gradient not populated for tensor of shape " +
                          shape_to_string(shape()));
    }
    return node_->grad;
  }

  void zero_grad() {
    if (node_) node_->grad.resize(0);
  }

  // Value copy detached from any graph.
  Tensor detach() const {
    return Tensor(node_->shape, node_->value);
  }

  // Value copy that keeps leaf status (requires_grad) but shares nothing.
  Tensor clone() const {
    Tensor t(node_->shape, node_->value);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Builds an op result and records the backward rule when gradients are
// enabled and some input is on a gradient path.
template <typename S>
Tensor<S> make_op(Shape shape, ArrayX<S> value, std::vector<Tensor<S>> inputs,
                  std::function<void(detail::Node<S>&)> backprop) {
  Tensor<S> out(std::move(shape), std::move(value));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    auto n = out.node();
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backprop = std::move(backprop);
  }
  return out;
}

// Reverse-mode sweep from a scalar loss. Populates grad on every
// requires_grad leaf reachable from the loss, then releases the recorded
// graph; interior grads are freed, leaf grads are kept for the optimizer.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw ContractError("backward() called on a tensor with no recorded graph");
  }
  if (root->backward_done) {
    throw ContractError("backward() called twice on the same graph");
  }
  root->backward_done = true;

  // Collect reachable nodes once, then order by descending creation index;
  // parents are always created before children, so this is reverse
  // topological order and every op is visited exactly once.
  std::vector<std::shared_ptr<detail::Node<S>>> order;
  {
    std::unordered_set<const detail::Node<S>*> visited;
    std::vector<std::shared_ptr<detail::Node<S>>> stack{root};
    visited.insert(root.get());
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (auto& p : n->parents) {
        if (p->requires_grad && visited.insert(p.get()).second) stack.push_back(p);
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  root->grad = ArrayX<S>::Constant(1, S(1));
  for (auto& n : order) {
    if (n->backprop && n->grad.size() > 0) n->backprop(*n);
  }
  // Release the tape. Leaves keep their grads.
  for (auto& n : order) {
    const bool is_leaf = n->parents.empty() && !n->backprop;
    n->parents.clear();
    n->backprop = nullptr;
    if (!is_leaf) n->grad.resize(0);
  }
}

}  // namespace cotta

#endif  // COTTA_CORE_TENSOR_HPP_
