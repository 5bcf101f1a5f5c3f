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

#include <cstring>

#include "pcsc/model.hpp"
#include "support/op_suite.hpp"
#include "support/temp_dir.hpp"

using namespace pcsc;
using namespace pcsc::testing;

namespace {

Checkpoint sample_checkpoint(Rng* rng = nullptr) {
  Model model(ModelConfig::tiny(), 21);
  Rng data(21);
  ForwardOptions train;
  train.training = true;
  model.forward(random_model_input(model.config(), 3, data), train);  // moves the batch-norm buffers
  return Checkpoint::capture(model, TrainingStage::kStage2, rng);
}

}  // namespace

TEST_CASE("checkpoint bytes round trip exactly") {
  Rng rng(3);
  rng.discard(17);
  const Checkpoint ck = sample_checkpoint(&rng);
  const std::string bytes = ck.to_bytes();
  const Checkpoint back = Checkpoint::from_bytes(bytes);
  CHECK(back.config == ck.config);
  CHECK(back.stage == TrainingStage::kStage2);
  CHECK(back.tensors == ck.tensors);
  CHECK(back.to_bytes() == bytes);
  Rng restored;
  back.restore_rng(restored);
  CHECK(restored == rng);
}

TEST_CASE("restored models compute identical outputs") {
  const Checkpoint ck = sample_checkpoint();
  Model a = ck.restore(), b = Checkpoint::from_bytes(ck.to_bytes()).restore();
  Rng rng(4);
  const ModelInput in = random_model_input(a.config(), 2, rng);
  const Tensor la = a.forward(in, {}).logits, lb = b.forward(in, {}).logits;
  CHECK(std::memcmp(la.data().data(), lb.data().data(), la.numel() * sizeof(Real)) == 0);
  CHECK(Checkpoint::capture(b, TrainingStage::kStage2).tensors == ck.tensors);
}

TEST_CASE("checkpoint files") {
  TempDir tmp;
  const Checkpoint ck = sample_checkpoint();
  ck.save(tmp.path() / "m.ckpt");
  CHECK(Checkpoint::load(tmp.path() / "m.ckpt").tensors == ck.tensors);
  CHECK_THROWS(Checkpoint::load(tmp.path() / "absent.ckpt"));
}

TEST_CASE("damaged checkpoints are rejected") {
  const Checkpoint ck = sample_checkpoint();
  const std::string bytes = ck.to_bytes();
  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < bytes.size(); n += 7) CHECK_THROWS_AS(Checkpoint::from_bytes(bytes.substr(0, n)), FormatError);
  }
  SUBCASE("magic") {
    std::string b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(Checkpoint::from_bytes(b), FormatError);
  }
  SUBCASE("version") {
    std::string b = bytes;
    b[4] = 9;
    CHECK_THROWS_AS(Checkpoint::from_bytes(b), FormatError);
  }
  SUBCASE("element size") {
    std::string b = bytes;
    b[8] = 3;
    CHECK_THROWS_AS(Checkpoint::from_bytes(b), FormatError);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(Checkpoint::from_bytes(bytes + "x"), FormatError); }
}

TEST_CASE("checkpoints must match the model they rebuild") {
  Checkpoint ck = sample_checkpoint();
  SUBCASE("missing tensor") { ck.tensors.pop_back(); }
  SUBCASE("wrong shape") {
    ck.tensors.front().shape.back() += 1;
    ck.tensors.front().values.resize(ck.tensors.front().values.size() + ck.tensors.front().shape.front());
  }
  SUBCASE("unknown tensor") { ck.tensors.push_back({"extra.weight", {1}, RealVector{1}}); }
  CHECK_THROWS_AS(ck.restore(), FormatError);
}

TEST_CASE("checkpoints without RNG state leave the generator alone") {
  const Checkpoint ck = sample_checkpoint();
  CHECK(ck.rng_state.empty());
  Rng rng(8), copy(8);
  ck.restore_rng(rng);
  CHECK(rng == copy);
  Checkpoint bad = ck;
  bad.rng_state = "not a state";
  CHECK_THROWS_AS(bad.restore_rng(rng), FormatError);
}
