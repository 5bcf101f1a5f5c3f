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

#include "pcsc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include <Eigen/Core>

PCSC_BEGIN_NAMESPACE
namespace ops {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowVecR = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using MapMat = Eigen::Map<MatR>;
using CMapMat = Eigen::Map<const MatR>;
using Stride = Eigen::OuterStride<>;
using SMapMat = Eigen::Map<MatR, 0, Stride>;
using CSMapMat = Eigen::Map<const MatR, 0, Stride>;

// Gradient buffer of input i, or nullptr when that input is not trainable.
Real* input_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const Real* input_value(const Node& self, std::size_t i) { return self.parents[i]->value.data(); }

std::size_t normalize_axis(int axis, std::size_t rank, bool allow_end = false) {
  const int r = static_cast<int>(rank) + (allow_end ? 1 : 0);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// [outer, len, inner] view around an axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                   shape_to_string(b));
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  RealVector out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
    shape_mismatch("add", sa, sb);
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  RealVector out(a.data().begin(), a.data().end());
  const Real* pb = b.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += pb[i];
  return make_result(sa, std::move(out), {a, b}, "add", [outer, inner](Node& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += g[i];
    if (Real* gb = input_grad(self, 1))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) gb[i] += g[o * inner + i];
  });
}

Tensor scale(const Tensor& x, Real factor) {
  RealVector out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x}, "scale", [factor](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_result({}, {total}, {x}, "sum", [](Node& self) {
    if (Real* gx = input_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.dim(-1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
  const std::size_t k = b.dim(0), m = b.dim(1), rows = a.numel() / k;
  Shape shape = a.shape();
  shape.back() = m;
  RealVector out(rows * m);
  MapMat(out.data(), rows, m).noalias() = CMapMat(a.data().data(), rows, k) * CMapMat(b.data().data(), k, m);
  return make_result(std::move(shape), std::move(out), {a, b}, "matmul", [rows, k, m](Node& self) {
    CMapMat g(self.grad.data(), rows, m);
    if (Real* ga = input_grad(self, 0))
      MapMat(ga, rows, k).noalias() += g * CMapMat(input_value(self, 1), k, m).transpose();
    if (Real* gb = input_grad(self, 1))
      MapMat(gb, k, m).noalias() += CMapMat(input_value(self, 0), rows, k).transpose() * g;
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || x.dim(-1) != weight.dim(1))
    shape_mismatch("linear", x.shape(), weight.shape());
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(0)))
    shape_mismatch("linear(bias)", weight.shape(), bias.shape());
  const std::size_t in = weight.dim(1), out_dim = weight.dim(0), rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  RealVector out(rows * out_dim);
  MapMat y(out.data(), rows, out_dim);
  y.noalias() = CMapMat(x.data().data(), rows, in) * CMapMat(weight.data().data(), out_dim, in).transpose();
  if (has_bias) y.rowwise() += Eigen::Map<const RowVecR>(bias.data().data(), out_dim);
  auto backward = [rows, in, out_dim](Node& self) {
    CMapMat g(self.grad.data(), rows, out_dim);
    if (Real* gx = input_grad(self, 0))
      MapMat(gx, rows, in).noalias() += g * CMapMat(input_value(self, 1), out_dim, in);
    if (Real* gw = input_grad(self, 1))
      MapMat(gw, out_dim, in).noalias() += g.transpose() * CMapMat(input_value(self, 0), rows, in);
    if (self.parents.size() > 2)
      if (Real* gb = input_grad(self, 2)) Eigen::Map<RowVecR>(gb, out_dim) += g.colwise().sum();
  };
  if (has_bias) return make_result(std::move(shape), std::move(out), {x, weight, bias}, "linear", backward);
  return make_result(std::move(shape), std::move(out), {x, weight}, "linear", backward);
}

Tensor pointwise_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    shape_mismatch("pointwise_linear", x.shape(), weight.shape());
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
    shape_mismatch("pointwise_linear(bias)", weight.shape(), bias.shape());
  const std::size_t batch = x.dim(0), cin = x.dim(1), n = x.dim(2), cout = weight.dim(0);
  RealVector out(batch * cout * n);
  CMapMat w(weight.data().data(), cout, cin);
  Eigen::Map<const VecR> b(bias.data().data(), cout);
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat y(out.data() + i * cout * n, cout, n);
    y.noalias() = w * CMapMat(x.data().data() + i * cin * n, cin, n);
    y.colwise() += b;
  }
  return make_result({batch, cout, n}, std::move(out), {x, weight, bias}, "pointwise_linear",
                     [batch, cin, n, cout](Node& self) {
                       const Real* xv = input_value(self, 0);
                       CMapMat w(input_value(self, 1), cout, cin);
                       Real* gx = input_grad(self, 0);
                       Real* gw = input_grad(self, 1);
                       Real* gb = input_grad(self, 2);
                       for (std::size_t i = 0; i < batch; ++i) {
                         CMapMat g(self.grad.data() + i * cout * n, cout, n);
                         if (gx) MapMat(gx + i * cin * n, cin, n).noalias() += w.transpose() * g;
                         if (gw) MapMat(gw, cout, cin).noalias() += g * CMapMat(xv + i * cin * n, cin, n).transpose();
                         if (gb) Eigen::Map<VecR>(gb, cout) += g.rowwise().sum();
                       }
                     });
}

Tensor batch_norm_1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                     Tensor& running_var, bool training, BatchNormConfig config) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("batch_norm_1d: expected [B, C] or [B, C, N], got " +
                                                       shape_to_string(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), n = x.rank() == 3 ? x.dim(2) : 1;
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var})
    if (t->rank() != 1 || t->dim(0) != channels) shape_mismatch("batch_norm_1d", x.shape(), t->shape());
  const std::size_t count = batch * n;
  const Real* xv = x.data().data();

  auto mean = std::make_shared<RealVector>(channels);
  auto inv_std = std::make_shared<RealVector>(channels);
  if (training) {
    if (count < 2) throw ArgumentError("batch_norm_1d: training needs more than one value per channel");
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0, ss = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n; ++j) s += xv[(b * channels + c) * n + j];
      const double mu = s / static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n; ++j) {
          const double d = xv[(b * channels + c) * n + j] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      (*mean)[c] = static_cast<Real>(mu);
      (*inv_std)[c] = static_cast<Real>(1.0 / std::sqrt(var + config.eps));
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[c] = static_cast<Real>((1.0 - config.momentum) * rm[c] + config.momentum * mu);
      rv[c] = static_cast<Real>((1.0 - config.momentum) * rv[c] +
                                config.momentum * ss / static_cast<double>(count - 1));
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      (*mean)[c] = running_mean.data()[c];
      (*inv_std)[c] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + config.eps));
    }
  }

  RealVector out(x.numel());
  const Real* gv = gamma.data().data();
  const Real* bv = beta.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = (b * channels + c) * n + j;
        out[i] = ((xv[i] - (*mean)[c]) * (*inv_std)[c]) * gv[c] + bv[c];
      }

  return make_result(x.shape(), std::move(out), {x, gamma, beta}, "batch_norm_1d",
                     [=](Node& self) {
                       const Real* xv = input_value(self, 0);
                       const Real* gv = input_value(self, 1);
                       const Real* g = self.grad.data();
                       Real* gx = input_grad(self, 0);
                       Real* ggamma = input_grad(self, 1);
                       Real* gbeta = input_grad(self, 2);
                       for (std::size_t c = 0; c < channels; ++c) {
                         const Real mu = (*mean)[c], is = (*inv_std)[c];
                         double sum_g = 0, sum_gx = 0;
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t j = 0; j < n; ++j) {
                             const std::size_t i = (b * channels + c) * n + j;
                             sum_g += g[i];
                             sum_gx += g[i] * (xv[i] - mu) * is;
                           }
                         if (ggamma) ggamma[c] += static_cast<Real>(sum_gx);
                         if (gbeta) gbeta[c] += static_cast<Real>(sum_g);
                         if (!gx) continue;
                         if (training) {
                           // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
                           const double mg = sum_g / static_cast<double>(count);
                           const double mgx = sum_gx / static_cast<double>(count);
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t j = 0; j < n; ++j) {
                               const std::size_t i = (b * channels + c) * n + j;
                               const double xhat = (xv[i] - mu) * is;
                               gx[i] += static_cast<Real>(gv[c] * is * (g[i] - mg - xhat * mgx));
                             }
                         } else {
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t j = 0; j < n; ++j) {
                               const std::size_t i = (b * channels + c) * n + j;
                               gx[i] += gv[c] * is * g[i];
                             }
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  RealVector out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  return make_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    if (Real* gx = input_grad(self, 0)) {
      const Real* xv = input_value(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (xv[i] > Real(0)) gx[i] += self.grad[i];
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  RealVector out(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = static_cast<Real>(0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))));
  }
  return make_result(x.shape(), std::move(out), {x}, "gelu", [](Node& self) {
    if (Real* gx = input_grad(self, 0)) {
      const Real* xv = input_value(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        gx[i] += static_cast<Real>(d * self.grad[i]);
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t d = x.dim(-1), rows = x.numel() / d;
  RealVector out(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv + r * d;
    Real* o = out.data() + r * d;
    const Real mx = *std::max_element(in, in + d);
    Real total = 0;
    for (std::size_t j = 0; j < d; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, "softmax", [d, rows](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = self.value.data() + r * d;
        const Real* g = self.grad.data() + r * d;
        Real dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
      }
  });
}

Tensor max_pool(const Tensor& x, int axis) {
  const std::size_t a = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), a);
  if (v.len == 0) throw ShapeError("max_pool: empty axis");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(a));
  RealVector out(v.outer * v.inner);
  auto arg = std::make_shared<std::vector<std::uint32_t>>(out.size(), 0u);
  const Real* xv = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const Real* base = xv + o * v.len * v.inner;
    Real* dst = out.data() + o * v.inner;
    std::uint32_t* am = arg->data() + o * v.inner;
    std::copy(base, base + v.inner, dst);
    for (std::size_t l = 1; l < v.len; ++l) {
      const Real* row = base + l * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i)
        if (row[i] > dst[i]) {
          dst[i] = row[i];
          am[i] = static_cast<std::uint32_t>(l);
        }
    }
  }
  return make_result(std::move(shape), std::move(out), {x}, "max_pool", [v, arg](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t idx = o * v.inner + i;
          gx[(o * v.len + (*arg)[idx]) * v.inner + i] += self.grad[idx];
        }
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ArgumentError("concat: no inputs");
  const std::size_t a = normalize_axis(axis, xs[0].rank());
  Shape shape = xs[0].shape();
  shape[a] = 0;
  std::vector<std::size_t> lens;
  for (const auto& t : xs) {
    if (t.rank() != shape.size()) shape_mismatch("concat", xs[0].shape(), t.shape());
    for (std::size_t i = 0; i < shape.size(); ++i)
      if (i != a && t.shape()[i] != xs[0].shape()[i]) shape_mismatch("concat", xs[0].shape(), t.shape());
    lens.push_back(t.shape()[a]);
    shape[a] += t.shape()[a];
  }
  const AxisView v = axis_view(shape, a);
  RealVector out(shape_numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t chunk = lens[k] * v.inner;
    const Real* src = xs[k].data().data();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.data() + o * v.len * v.inner + offset);
    offset += chunk;
  }
  return make_result(std::move(shape), std::move(out), xs, "concat", [v, lens](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      const std::size_t chunk = lens[k] * v.inner;
      if (Real* gx = input_grad(self, k))
        for (std::size_t o = 0; o < v.outer; ++o) {
          const Real* g = self.grad.data() + o * v.len * v.inner + offset;
          for (std::size_t i = 0; i < chunk; ++i) gx[o * chunk + i] += g[i];
        }
      offset += chunk;
    }
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t a = normalize_axis(axis, x.rank());
  if (begin > end || end > x.shape()[a])
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_to_string(x.shape()));
  const AxisView v = axis_view(x.shape(), a);
  Shape shape = x.shape();
  shape[a] = end - begin;
  const std::size_t chunk = (end - begin) * v.inner;
  RealVector out(v.outer * chunk);
  const Real* xv = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const Real* src = xv + (o * v.len + begin) * v.inner;
    std::copy(src, src + chunk, out.data() + o * chunk);
  }
  return make_result(std::move(shape), std::move(out), {x}, "slice", [v, begin, chunk](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t o = 0; o < v.outer; ++o) {
        Real* dst = gx + (o * v.len + begin) * v.inner;
        const Real* g = self.grad.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
      }
  });
}

Tensor broadcast_axis(const Tensor& x, int axis, std::size_t n) {
  const std::size_t a = normalize_axis(axis, x.rank(), true);
  Shape shape = x.shape();
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(a), n);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < a; ++i) outer *= x.shape()[i];
  for (std::size_t i = a; i < x.rank(); ++i) inner *= x.shape()[i];
  RealVector out(outer * n * inner);
  const Real* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < n; ++r) std::copy(xv + o * inner, xv + (o + 1) * inner, out.data() + (o * n + r) * inner);
  return make_result(std::move(shape), std::move(out), {x}, "broadcast_axis", [outer, n, inner](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t r = 0; r < n; ++r) {
          const Real* g = self.grad.data() + (o * n + r) * inner;
          for (std::size_t i = 0; i < inner; ++i) gx[o * inner + i] += g[i];
        }
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2");
  const std::size_t rows = x.dim(-2), cols = x.dim(-1), batch = x.numel() / (rows * cols);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  RealVector out(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    MapMat(out.data() + b * rows * cols, cols, rows) = CMapMat(x.data().data() + b * rows * cols, rows, cols).transpose();
  return make_result(std::move(shape), std::move(out), {x}, "transpose_last2", [batch, rows, cols](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t b = 0; b < batch; ++b)
        MapMat(gx + b * rows * cols, rows, cols) += CMapMat(self.grad.data() + b * rows * cols, cols, rows).transpose();
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.dim(-1), rows = x.numel() / d;
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  auto stats = std::make_shared<RealVector>(2 * rows);  // mean, inv_std
  RealVector out(x.numel());
  const Real* xv = x.data().data();
  const Real* gv = gamma.data().data();
  const Real* bv = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv + r * d;
    double s = 0, ss = 0;
    for (std::size_t j = 0; j < d; ++j) s += in[j];
    const double mu = s / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) ss += (in[j] - mu) * (in[j] - mu);
    const double is = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    (*stats)[2 * r] = static_cast<Real>(mu);
    (*stats)[2 * r + 1] = static_cast<Real>(is);
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = static_cast<Real>((in[j] - mu) * is) * gv[j] + bv[j];
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, "layer_norm", [d, rows, stats](Node& self) {
    const Real* xv = input_value(self, 0);
    const Real* gv = input_value(self, 1);
    Real* gx = input_grad(self, 0);
    Real* ggamma = input_grad(self, 1);
    Real* gbeta = input_grad(self, 2);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real mu = (*stats)[2 * r], is = (*stats)[2 * r + 1];
      const Real* g = self.grad.data() + r * d;
      const Real* in = xv + r * d;
      double mean_d = 0, mean_dx = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double xhat = (in[j] - mu) * is;
        if (ggamma) ggamma[j] += static_cast<Real>(g[j] * xhat);
        if (gbeta) gbeta[j] += g[j];
        dxhat[j] = static_cast<double>(g[j]) * gv[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat;
      }
      if (!gx) continue;
      mean_d /= static_cast<double>(d);
      mean_dx /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double xhat = (in[j] - mu) * is;
        gx[r * d + j] += static_cast<Real>(is * (dxhat[j] - mean_d - xhat * mean_dx));
      }
    }
  });
}

Tensor dropout(const Tensor& x, Real p, Rng& rng, bool training) {
  if (p < Real(0) || p >= Real(1)) throw ArgumentError("dropout: p must lie in [0, 1)");
  if (!training || p == Real(0)) return x;
  auto mask = std::make_shared<RealVector>(x.numel());
  std::bernoulli_distribution keep(1.0 - p);
  const Real s = Real(1) / (Real(1) - p);
  for (auto& m : *mask) m = keep(rng) ? s : Real(0);
  RealVector out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * (*mask)[i];
  return make_result(x.shape(), std::move(out), {x}, "dropout", [mask](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor attention(const Tensor& qkv, std::size_t heads) {
  if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0) throw ShapeError("attention: expected [B, T, 3D], got " +
                                                              shape_to_string(qkv.shape()));
  const std::size_t batch = qkv.dim(0), tokens = qkv.dim(1), d = qkv.dim(2) / 3;
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Eigen::Index row_stride = static_cast<Eigen::Index>(3 * d);
  auto probs = std::make_shared<RealVector>(batch * heads * tokens * tokens);
  RealVector out(batch * tokens * d);
  const Real* base = qkv.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const Real* q = base + b * tokens * 3 * d + h * dh;
      CSMapMat Q(q, tokens, dh, Stride(row_stride));
      CSMapMat K(q + d, tokens, dh, Stride(row_stride));
      CSMapMat V(q + 2 * d, tokens, dh, Stride(row_stride));
      MapMat A(probs->data() + (b * heads + h) * tokens * tokens, tokens, tokens);
      A.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index r = 0; r < A.rows(); ++r) {
        A.row(r).array() -= A.row(r).maxCoeff();
        A.row(r) = A.row(r).array().exp();
        A.row(r) /= A.row(r).sum();
      }
      SMapMat(out.data() + b * tokens * d + h * dh, tokens, dh, Stride(static_cast<Eigen::Index>(d))).noalias() = A * V;
    }
  return make_result({batch, tokens, d}, std::move(out), {qkv}, "attention",
                     [=](Node& self) {
                       Real* gqkv = input_grad(self, 0);
                       if (!gqkv) return;
                       const Real* base = input_value(self, 0);
                       MatR dA(tokens, tokens);
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = b * tokens * 3 * d + h * dh;
                           CSMapMat Q(base + off, tokens, dh, Stride(row_stride));
                           CSMapMat K(base + off + d, tokens, dh, Stride(row_stride));
                           CSMapMat V(base + off + 2 * d, tokens, dh, Stride(row_stride));
                           SMapMat gQ(gqkv + off, tokens, dh, Stride(row_stride));
                           SMapMat gK(gqkv + off + d, tokens, dh, Stride(row_stride));
                           SMapMat gV(gqkv + off + 2 * d, tokens, dh, Stride(row_stride));
                           CMapMat A(probs->data() + (b * heads + h) * tokens * tokens, tokens, tokens);
                           CSMapMat gO(self.grad.data() + b * tokens * d + h * dh, tokens, dh,
                                       Stride(static_cast<Eigen::Index>(d)));
                           gV.noalias() += A.transpose() * gO;
                           dA.noalias() = gO * V.transpose();
                           // softmax backward, row-wise
                           const VecR dots = (dA.array() * A.array()).rowwise().sum();
                           dA = A.array() * (dA.colwise() - dots).array();
                           gQ.noalias() += (dA * K) * scale;
                           gK.noalias() += (dA.transpose() * Q) * scale;
                         }
                     });
}

Tensor multi_head_self_attention(const Tensor& x, std::size_t heads, const AttentionParams& params) {
  if (x.rank() != 3) throw ShapeError("multi_head_self_attention: expected [B, T, D], got " + shape_to_string(x.shape()));
  const std::size_t d = x.dim(2);
  if (heads == 0 || d % heads != 0)
    throw ConfigError("multi_head_self_attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const Tensor qkv = linear(x, params.qkv_weight, params.qkv_bias);
  return linear(attention(qkv, heads), params.proj_weight, params.proj_bias);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0) throw ArgumentError("cross_entropy: empty batch");
  auto probs = std::make_shared<RealVector>(batch * classes);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0;
  const Real* lv = logits.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
    const Real* row = lv + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double total = 0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < classes; ++c)
      (*probs)[b * classes + c] = static_cast<Real>(std::exp(row[c] - mx) / total);
    loss += mx + std::log(total) - row[y];
  }
  loss /= static_cast<double>(batch);
  return make_result({}, {static_cast<Real>(loss)}, {logits}, "cross_entropy",
                     [batch, classes, probs, targets](Node& self) {
                       if (Real* gl = input_grad(self, 0)) {
                         const Real g = self.grad[0] / static_cast<Real>(batch);
                         for (std::size_t b = 0; b < batch; ++b)
                           for (std::size_t c = 0; c < classes; ++c) {
                             const Real onehot = static_cast<int>(c) == (*targets)[b] ? Real(1) : Real(0);
                             gl[b * classes + c] += g * ((*probs)[b * classes + c] - onehot);
                           }
                       }
                     });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("mse", a.shape(), b.shape());
  const std::size_t n = a.numel();
  if (n == 0) throw ArgumentError("mse: empty input");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    total += d * d;
  }
  return make_result({}, {static_cast<Real>(total / static_cast<double>(n))}, {a, b}, "mse", [n](Node& self) {
    const Real* av = input_value(self, 0);
    const Real* bv = input_value(self, 1);
    const Real k = Real(2) * self.grad[0] / static_cast<Real>(n);
    if (Real* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += k * (av[i] - bv[i]);
    if (Real* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < n; ++i) gb[i] -= k * (av[i] - bv[i]);
  });
}

Tensor normalize_power(const Tensor& x) {
  if (x.rank() < 2 || x.dim(-1) != 2) throw ShapeError("normalize_power: expected [B, ..., 2], got " + shape_to_string(x.shape()));
  const std::size_t frames = x.dim(0);
  const std::size_t f = frames == 0 ? 0 : x.numel() / frames;
  if (f == 0) throw DegenerateInputError("normalize_power: empty frame");
  const double symbols = static_cast<double>(f) / 2.0;
  auto inv_rms = std::make_shared<RealVector>(frames);
  RealVector out(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t b = 0; b < frames; ++b) {
    double energy = 0;
    for (std::size_t i = 0; i < f; ++i) energy += static_cast<double>(xv[b * f + i]) * xv[b * f + i];
    if (!(energy > 0.0)) throw DegenerateInputError("normalize_power: all-zero frame");
    const double s = 1.0 / std::sqrt(energy / symbols);
    (*inv_rms)[b] = static_cast<Real>(s);
    for (std::size_t i = 0; i < f; ++i) out[b * f + i] = static_cast<Real>(xv[b * f + i] * s);
  }
  return make_result(x.shape(), std::move(out), {x}, "normalize_power", [frames, f, inv_rms](Node& self) {
    Real* gx = input_grad(self, 0);
    if (!gx) return;
    // dx = s * (g - (2 / F) * y * <g, y>)
    for (std::size_t b = 0; b < frames; ++b) {
      const Real* y = self.value.data() + b * f;
      const Real* g = self.grad.data() + b * f;
      double dot = 0;
      for (std::size_t i = 0; i < f; ++i) dot += static_cast<double>(g[i]) * y[i];
      const double k = 2.0 * dot / static_cast<double>(f);
      const double s = (*inv_rms)[b];
      for (std::size_t i = 0; i < f; ++i) gx[b * f + i] += static_cast<Real>(s * (g[i] - k * y[i]));
    }
  });
}

Tensor complex_scale(const Tensor& x, std::complex<double> c) {
  if (x.rank() < 1 || x.dim(-1) != 2) throw ShapeError("complex_scale: expected [..., 2], got " + shape_to_string(x.shape()));
  const std::size_t pairs = x.numel() / 2;
  const double cr = c.real(), ci = c.imag();
  RealVector out(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t i = 0; i < pairs; ++i) {
    const double re = xv[2 * i], im = xv[2 * i + 1];
    out[2 * i] = static_cast<Real>(cr * re - ci * im);
    out[2 * i + 1] = static_cast<Real>(ci * re + cr * im);
  }
  return make_result(x.shape(), std::move(out), {x}, "complex_scale", [pairs, cr, ci](Node& self) {
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < pairs; ++i) {
        const double gre = self.grad[2 * i], gim = self.grad[2 * i + 1];
        gx[2 * i] += static_cast<Real>(cr * gre + ci * gim);
        gx[2 * i + 1] += static_cast<Real>(-ci * gre + cr * gim);
      }
  });
}

}  // namespace ops
PCSC_END_NAMESPACE
