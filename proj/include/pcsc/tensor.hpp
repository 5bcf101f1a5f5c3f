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

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pcsc/errors.hpp"

PCSC_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

/// One value in the define-by-run graph. Leaves have no parents; results of
/// differentiable ops keep their inputs alive through `parents`.
struct Node {
  Shape shape;
  RealVector value;
  RealVector grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  BackwardFn backward;

  /// Zero-initialized gradient buffer of value.size().
  RealVector& grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, RealVector values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Dimension `axis`; negative values count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();
  void release_grad();

  /// New leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Reverse-mode sweep from this scalar. Throws ArgumentError otherwise.
  void backward() const;

  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

/// Reverse topological record of everything reachable from a root that
/// participates in differentiation.
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor& root);

  /// Nodes in topological order: every node appears after its parents.
  const std::vector<Node*>& nodes() const noexcept { return order_; }

  /// Seeds d(root)/d(root) = 1 and visits nodes in reverse order once each.
  void backward();

 private:
  Node* root_ = nullptr;
  std::vector<Node*> order_;
};

/// Whether ops currently record graph edges (thread-local).
bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. The node records `inputs` and `backward` only when
/// grad mode is on and some input requires a gradient.
Tensor make_result(Shape shape, RealVector value, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn backward);
Tensor make_result(Shape shape, RealVector value, const std::vector<Tensor>& inputs,
                   const char* op, BackwardFn backward);

/// Throws Error when any value is NaN or infinite. Called after every op in
/// builds with PCSC_CHECK_FINITE defined.
void check_finite(const Node& node);

PCSC_END_NAMESPACE
