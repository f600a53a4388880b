// Copyright 2026 The invmark Authors
// SPDX-License-Identifier: Apache-2.0
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

#pragma once

// Minimal reverse-mode automatic differentiation over Tensor<T>.
//
// A Var is a shared handle to a graph node. Ops build new nodes that keep
// their parents alive and carry a closure which pushes the node's gradient
// into the parents. Parameters are leaf Vars with requires_grad set; they
// live outside any single graph and are reused across steps.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "invmark/tensor.hpp"

namespace invmark::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // grad += g (allocating on first use).
  void accumulate(const Tensor<T>& g);
  void accumulate(Tensor<T>&& g);
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value);
  static Var parameter(Tensor<T> value);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  // For optimizers and checkpoint loading; never call on interior nodes.
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 and propagates through the graph. root must be
// a single-element tensor.
template <typename T>
void backward(const Var<T>& root);

// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Elementwise.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
// Gradient is zero where the input lies outside [lo, hi].
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Shape manipulation on NCHW tensors.
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> concat_channels(std::span<const Var<T>> parts);
template <typename T> Var<T> upsample_nearest2x(const Var<T>& a);
// [N,C,H,W] -> [N,C]
template <typename T> Var<T> global_avg_pool(const Var<T>& a);
// x[N,C,H,W] * s[N,C] broadcast over space.
template <typename T> Var<T> channel_scale(const Var<T>& x, const Var<T>& s);

// Layers.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              std::int64_t stride, std::int64_t pad);
// x[N,in] * weight[out,in]^T + bias[out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Haar transforms ([N,C,H,W] <-> [N,4C,H/2,W/2]) and the LL channel pick.
template <typename T> Var<T> haar_dwt(const Var<T>& x);
template <typename T> Var<T> haar_iwt(const Var<T>& f);
template <typename T> Var<T> ll_band(const Var<T>& f);

// Depthwise filtering with separable taps and reflect padding.
template <typename T>
Var<T> separable_filter(const Var<T>& x, std::span<const T> taps);

// out = keep ? x : fill, where keep is [N,1,H,W] (shared across channels).
template <typename T>
Var<T> masked_replace(const Var<T>& x, const Tensor<T>& keep,
                      const Tensor<T>& fill);

// Value of `value`, gradient of the identity on x.
template <typename T>
Var<T> straight_through(const Var<T>& x, const Tensor<T>& value);

// Reductions to a single element.
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sum(const Var<T>& a);
// sum_i weights_i * a_i
template <typename T> Var<T> dot(const Var<T>& a, const Tensor<T>& weights);

}  // namespace invmark::ag
