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

#include <doctest.h>

#include <set>

#include "pcsc/ops.hpp"
#include "support/gradcheck.hpp"

using namespace pcsc;
using namespace pcsc::testing;

TEST_CASE("tensor construction checks sizes") {
  const Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.dim(-1) == 4);
  CHECK(shape_to_string(t.shape()) == "[2x3x4]");
  CHECK_THROWS_AS(Tensor::from({2, 2}, RealVector(3)), ShapeError);
  CHECK_THROWS_AS(Tensor::full({2}, 1).item(), ShapeError);
}

TEST_CASE("gradients only for tensors that ask for them") {
  Rng rng(1);
  Tensor w = random_tensor({3}, rng, true);
  Tensor c = random_tensor({3}, rng, false);
  ops::sum(ops::add(w, c)).backward();
  CHECK(w.has_grad());
  CHECK_FALSE(c.has_grad());
  w.set_requires_grad(false);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("backward requires a scalar root") {
  Rng rng(2);
  Tensor x = random_tensor({2, 2}, rng);
  CHECK_THROWS_AS(ops::scale(x, 2).backward(), ArgumentError);
}

TEST_CASE("no-grad guard records nothing") {
  Rng rng(3);
  Tensor x = random_tensor({4}, rng);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = ops::scale(x, 3);
  }
  CHECK(grad_enabled());
  CHECK(y.node()->parents.empty());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("graph trace is topological and visits each node once") {
  Rng rng(4);
  Tensor x = random_tensor({3}, rng);
  const Tensor a = ops::scale(x, 2);
  const Tensor b = ops::add(a, a);
  const Tensor root = ops::sum(ops::add(b, a));
  const ComputeGraph g = ComputeGraph::trace(root);
  const auto& nodes = g.nodes();
  CHECK(std::set<Node*>(nodes.begin(), nodes.end()).size() == nodes.size());
  CHECK(nodes.size() == 5);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& p : nodes[i]->parents) {
      const auto at = std::find(nodes.begin(), nodes.end(), p.get());
      REQUIRE(at != nodes.end());
      CHECK(at - nodes.begin() < static_cast<std::ptrdiff_t>(i));
    }
  root.backward();
  for (Real gx : x.grad()) CHECK(gx == 6.0f);
}

TEST_CASE("forward ops are deterministic") {
  Rng rng(5);
  const Tensor x = random_tensor({2, 5, 12}, rng);
  ops::AttentionParams p{random_tensor({36, 12}, rng), random_tensor({36}, rng), random_tensor({12, 12}, rng),
                         random_tensor({12}, rng)};
  const Tensor a = ops::multi_head_self_attention(x, 3, p);
  const Tensor b = ops::multi_head_self_attention(x, 3, p);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("pointwise_linear") {
  Rng rng(6);
  SUBCASE("identity weight") {
    const Tensor x = random_tensor({2, 3, 5}, rng);
    RealVector eye(9, Real(0));
    for (int i = 0; i < 3; ++i) eye[i * 4] = 1;
    const Tensor y = ops::pointwise_linear(x, Tensor::from({3, 3}, eye), Tensor::zeros({3}));
    CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }
  SUBCASE("3 -> 128 over 32 points") {
    const Tensor y = ops::pointwise_linear(random_tensor({1, 3, 32}, rng), random_tensor({128, 3}, rng),
                                           random_tensor({128}, rng));
    CHECK(y.shape() == Shape{1, 128, 32});
  }
  SUBCASE("definition") {
    const Tensor x = random_tensor({2, 3, 4}, rng), w = random_tensor({5, 3}, rng), b = random_tensor({5}, rng);
    const Tensor y = ops::pointwise_linear(x, w, b);
    for (std::size_t bi = 0; bi < 2; ++bi)
      for (std::size_t o = 0; o < 5; ++o)
        for (std::size_t n = 0; n < 4; ++n) {
          double s = b.data()[o];
          for (std::size_t i = 0; i < 3; ++i) s += double(w.at({o, i})) * x.at({bi, i, n});
          CHECK(y.at({bi, o, n}) == doctest::Approx(s).epsilon(1e-5));
        }
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      ops::pointwise_linear(random_tensor({1, 4, 2}, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      CHECK(what.find("[1x4x2]") != std::string::npos);
      CHECK(what.find("[5x3]") != std::string::npos);
    }
  }
}

TEST_CASE("self-attention") {
  Rng rng(7);
  ops::AttentionParams p{random_tensor({36, 12}, rng), random_tensor({36}, rng), random_tensor({12, 12}, rng),
                         random_tensor({12}, rng)};
  SUBCASE("a single token attends only to itself") {
    const Tensor x = random_tensor({1, 1, 12}, rng);
    const Tensor y = ops::multi_head_self_attention(x, 3, p);
    // output = proj(V) with V the last third of the qkv projection
    const Tensor qkv = ops::linear(x, p.qkv_weight, p.qkv_bias);
    const Tensor v = ops::slice(qkv, 2, 24, 36);
    const Tensor expect = ops::linear(v, p.proj_weight, p.proj_bias);
    for (std::size_t i = 0; i < 12; ++i) CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-5));
  }
  SUBCASE("permuting tokens permutes outputs") {
    const Tensor x = random_tensor({2, 5, 12}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    RealVector xp(x.numel());
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t t = 0; t < 5; ++t)
        std::copy_n(x.data().begin() + (b * 5 + perm[t]) * 12, 12, xp.begin() + (b * 5 + t) * 12);
    const Tensor y = ops::multi_head_self_attention(x, 3, p);
    const Tensor yp = ops::multi_head_self_attention(Tensor::from({2, 5, 12}, xp), 3, p);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t d = 0; d < 12; ++d)
          CHECK(yp.at({b, t, d}) == doctest::Approx(y.at({b, perm[t], d})).epsilon(1e-5));
  }
  SUBCASE("width must divide into heads") {
    CHECK_THROWS_AS(ops::multi_head_self_attention(random_tensor({1, 2, 12}, rng), 5, p), ConfigError);
  }
}

TEST_CASE("softmax rows sum to one and cross-entropy matches its definition") {
  Rng rng(8);
  const Tensor x = random_tensor({3, 6}, rng, false, 3.0);
  const Tensor s = ops::softmax(x);
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 6; ++c) sum += s.at({r, c});
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  const std::vector<int> labels{0, 5, 2};
  double expect = 0;
  for (std::size_t r = 0; r < 3; ++r) expect -= std::log(double(s.at({r, std::size_t(labels[r])})));
  CHECK(ops::cross_entropy(x, labels).item() == doctest::Approx(expect / 3).epsilon(1e-5));
  const std::vector<int> bad{0, 6, 1};
  CHECK_THROWS(ops::cross_entropy(x, bad));
}

TEST_CASE("max_pool gradient goes to the first maximum") {
  Tensor x = Tensor::from({1, 4}, {1, 3, 3, 2}, true);
  ops::sum(ops::max_pool(x, 1)).backward();
  CHECK(x.grad()[1] == 1.0f);
  CHECK(x.grad()[2] == 0.0f);
}

TEST_CASE("batch norm eval mode uses running statistics") {
  Rng rng(9);
  Tensor x = random_tensor({6, 2, 3}, rng, false, 2.0);
  Tensor gamma = Tensor::full({2}, 1), beta = Tensor::zeros({2});
  Tensor rm = Tensor::from({2}, {0.5f, -1.0f}), rv = Tensor::from({2}, {4.0f, 0.25f});
  const Tensor y = ops::batch_norm_1d(x, gamma, beta, rm, rv, false);
  CHECK(y.at({0, 0, 0}) == doctest::Approx((x.at({0, 0, 0}) - 0.5) / std::sqrt(4.0 + 1e-5)));
  CHECK(rm.data()[0] == 0.5f);
  ops::batch_norm_1d(x, gamma, beta, rm, rv, true);
  CHECK(rm.data()[0] != 0.5f);
}

TEST_CASE("dropout is identity in eval mode and unbiased in train mode") {
  Rng rng(10);
  const Tensor x = Tensor::full({20000}, 1);
  const Tensor e = ops::dropout(x, Real(0.4), rng, false);
  CHECK(e.node() == x.node());
  const Tensor t = ops::dropout(x, Real(0.4), rng, true);
  double sum = 0;
  for (Real v : t.data()) sum += v;
  CHECK(sum / 20000 == doctest::Approx(1.0).epsilon(0.03));
}
