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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pcsc/random.hpp"
#include "pcsc/tensor.hpp"

PCSC_BEGIN_NAMESPACE
namespace testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  RealVector values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(normal(rng));
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

/// Values bounded away from zero, for inputs to kinks such as ReLU.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (auto& v : t.data()) v = v < 0 ? v - Real(0.05) : v + Real(0.05);
  return t;
}

struct GradCheck {
  double max_error = 0.0;
  std::string worst_input;
};

/// Compares backward gradients of the scalar `loss` with central finite
/// differences, one input at a time. The error of an input is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6).
inline GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                 std::vector<std::string> names = {}, double step = 1e-5) {
  for (auto& t : inputs) t.release_grad();
  loss().backward();
  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    const RealVector analytic = t.has_grad() ? RealVector(t.grad().begin(), t.grad().end())
                                                    : RealVector(t.numel(), Real(0));
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const Real saved = t.data()[j];
      double plus, minus;
      {
        NoGradGuard guard;
        t.data()[j] = saved + static_cast<Real>(step);
        plus = loss().item();
        t.data()[j] = saved - static_cast<Real>(step);
        minus = loss().item();
      }
      t.data()[j] = saved;
      const double numeric = (plus - minus) / (2 * step);
      diff2 += (analytic[j] - numeric) * (analytic[j] - numeric);
      a2 += static_cast<double>(analytic[j]) * analytic[j];
      n2 += numeric * numeric;
    }
    const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    if (err >= result.max_error) {
      result.max_error = err;
      result.worst_input = i < names.size() ? names[i] : "input " + std::to_string(i);
    }
  }
  return result;
}

}  // namespace testing
PCSC_END_NAMESPACE
