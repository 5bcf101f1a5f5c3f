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

// Gradient checks; built against the 64-bit library.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "pcsc/training.hpp"
#include "support/op_suite.hpp"

using namespace pcsc;
using namespace pcsc::testing;

static_assert(sizeof(Real) == 8, "gradient tests need the 64-bit build");

TEST_CASE("every op matches central finite differences") {
  const auto checks = run_op_gradient_suite(20260101, 3);
  std::map<std::string, double> worst;
  for (const auto& c : checks) worst[c.op] = std::max(worst[c.op], c.result.max_error);
  CHECK(worst.size() >= 28);
  for (const auto& [op, err] : worst) {
    INFO(op << " relative error " << err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("whole tiny model matches finite differences for every parameter") {
  const auto checks = run_model_gradient_check(5);
  CHECK(checks.size() == Model(ModelConfig::tiny(), 5).parameters().size());
  for (const auto& c : checks) {
    INFO(c.op << " relative error " << c.result.max_error);
    CHECK(c.result.max_error < 1e-3);
  }
}

TEST_CASE("gradients accumulate across backward calls") {
  Rng rng(3);
  Tensor x = random_tensor({4}, rng);
  ops::sum(ops::scale(x, 2)).backward();
  ops::sum(ops::scale(x, 2)).backward();
  for (Real g : x.grad()) CHECK(g == doctest::Approx(4.0));
}

TEST_CASE("shared subexpressions receive the sum of both paths") {
  Rng rng(4);
  Tensor x = random_tensor({3}, rng);
  const Tensor y = ops::scale(x, 3);
  ops::sum(ops::add(y, y)).backward();
  for (Real g : x.grad()) CHECK(g == doctest::Approx(6.0));
}

TEST_CASE("64-bit training is bitwise reproducible") {
  SyntheticConfig sc{3, 12, 6, 24, 9, 0.01};
  const Dataset ds = generate_dataset(sc);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  auto run = [&] {
    Model model(ModelConfig::tiny(), 2);
    return stage1_train(ds, model, tc);
  };
  const TrainResult a = run(), b = run();
  REQUIRE(a.report.steps.size() == b.report.steps.size());
  for (std::size_t i = 0; i < a.report.steps.size(); ++i) CHECK(a.report.steps[i].loss == b.report.steps[i].loss);
  CHECK(a.checkpoint.to_bytes() == b.checkpoint.to_bytes());
}
