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

#include <complex>
#include <span>
#include <vector>

#include "pcsc/random.hpp"
#include "pcsc/tensor.hpp"

PCSC_BEGIN_NAMESPACE

/// Differentiable operators. Each backward is the exact vector-Jacobian
/// product of its forward.
namespace ops {

Tensor reshape(const Tensor& x, Shape shape);

/// a + b where b's shape equals a trailing suffix of a's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor sum(const Tensor& x);

/// [..., n, k] x [k, m] -> [..., n, m]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Affine map over the last axis: x[..., in] * weight[out, in]^T + bias[out].
/// `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Kernel-size-1 convolution: out[b, o, n] = sum_i weight[o, i] x[b, i, n] + bias[o].
Tensor pointwise_linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct BatchNormConfig {
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
};

/// Batch normalization over axis 1 of [B, C] or [B, C, N]. In training mode
/// the batch statistics normalize the input and update the running buffers
/// (unbiased variance); otherwise the running buffers are used.
Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Tensor& running_mean, Tensor& running_var, bool training,
                     BatchNormConfig config = {});

Tensor relu(const Tensor& x);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Maximum over `axis`, which is removed. The gradient flows to the first
/// maximal element only.
Tensor max_pool(const Tensor& x, int axis);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);

/// Inserts a new axis of length n at `axis` by repetition.
Tensor broadcast_axis(const Tensor& x, int axis, std::size_t n);

/// Swaps the two trailing axes.
Tensor transpose_last2(const Tensor& x);

/// Normalization over the last axis with learned scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = Real(1e-5));

/// Inverted dropout; the identity when !training or p == 0.
Tensor dropout(const Tensor& x, Real p, Rng& rng, bool training);

/// Scaled dot-product attention core. qkv is [B, T, 3D] holding Q, K and V
/// side by side; head h reads columns [h*D/H, (h+1)*D/H) of each block.
/// Returns the concatenated heads, [B, T, D].
Tensor attention(const Tensor& qkv, std::size_t heads);

struct AttentionParams {
  Tensor qkv_weight;   // [3D, D]
  Tensor qkv_bias;     // [3D]
  Tensor proj_weight;  // [D, D]
  Tensor proj_bias;    // [D]
};

/// Multi-head self attention over the token axis of x[B, T, D].
Tensor multi_head_self_attention(const Tensor& x, std::size_t heads, const AttentionParams& params);

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean of squared differences over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

/// Scales each leading-axis frame of x[B, ..., 2] so its mean complex
/// symbol power (re^2 + im^2) is one. The scale stays in the graph.
Tensor normalize_power(const Tensor& x);

/// Multiplies every (re, im) pair of x[..., 2] by the constant c.
Tensor complex_scale(const Tensor& x, std::complex<double> c);

}  // namespace ops

PCSC_END_NAMESPACE
