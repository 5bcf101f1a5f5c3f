// Copyright (c) 2026 The pcsc Authors
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

#include "pcsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

PCSC_BEGIN_NAMESPACE

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

RealVector& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), Real(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real(0), requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), RealVector(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, RealVector values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                                        shape_to_string(shape()));
  return shape()[static_cast<std::size_t>(a)];
}

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

Real Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("at(): index rank mismatch");
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t idx : index) {
    if (idx >= shape()[i]) throw ShapeError("at(): index out of range");
    flat = flat * shape()[i] + idx;
    ++i;
  }
  return node_->value[flat];
}

void Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

void Tensor::release_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
  if (!defined() || numel() != 1 || rank() > 1)
    throw ArgumentError("backward() requires a scalar loss, got " +
                        (defined() ? shape_to_string(shape()) : std::string("undefined")));
  ComputeGraph::trace(*this).backward();
}

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph graph;
  graph.root_ = root.node().get();
  if (!graph.root_->requires_grad) return graph;
  // Iterative post-order DFS over nodes that take part in differentiation.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{graph.root_, 0}};
  visited.insert(graph.root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      graph.order_.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

void ComputeGraph::backward() {
  if (order_.empty()) return;
  root_->grad_buffer()[0] += Real(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
template <typename Inputs>
Tensor make_result_impl(Shape shape, RealVector value, const Inputs& inputs, const char* op,
                        BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(std::begin(inputs), std::end(inputs),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
#ifdef PCSC_CHECK_FINITE
  check_finite(*node);
#endif
  return Tensor(std::move(node));
}
}  // namespace

Tensor make_result(Shape shape, RealVector value, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn backward) {
  return make_result_impl(std::move(shape), std::move(value), inputs, op, std::move(backward));
}

Tensor make_result(Shape shape, RealVector value, const std::vector<Tensor>& inputs,
                   const char* op, BackwardFn backward) {
  return make_result_impl(std::move(shape), std::move(value), inputs, op, std::move(backward));
}

void check_finite(const Node& node) {
  for (Real v : node.value)
    if (!std::isfinite(v)) throw Error(std::string("non-finite value produced by op '") + node.op + "'");
}

PCSC_END_NAMESPACE
