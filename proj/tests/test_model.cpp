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

#include <algorithm>

#include "pcsc/model.hpp"
#include "pcsc/ops.hpp"
#include "support/op_suite.hpp"

using namespace pcsc;
using namespace pcsc::testing;

namespace {

/// Trainable parameter count written out layer by layer from the widths.
std::size_t counted_parameters(const ModelConfig& c) {
  auto fc = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t d = c.token_dim;
  std::size_t n = fc(3, c.pos_hidden) + fc(c.pos_hidden, d);
  n += fc(3, c.conv1_width) + 2 * c.conv1_width + fc(c.conv1_width, c.conv2_width);
  n += fc(2 * c.conv2_width, c.conv3_width) + 2 * c.conv3_width + fc(c.conv3_width, c.conv4_width);
  n += fc(c.conv4_width, d);
  n += 2 * d;
  if (c.fusion == Fusion::kConcatProject) n += fc(2 * d, d);
  const std::size_t block = 4 * d + fc(d, 3 * d) + fc(d, d) + fc(d, c.mlp_ratio * d) + fc(c.mlp_ratio * d, d);
  n += c.transformer_blocks * block;
  n += fc(d, c.codec_hidden) + fc(c.codec_hidden, c.channel_dim);
  n += fc(c.channel_dim, c.codec_hidden) + fc(c.codec_hidden, d);
  n += fc(2 * d, c.num_classes);
  return n;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

void randomize(Model& model, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& [name, t] : model.parameters().entries())
    for (Real& v : t.data()) v = static_cast<Real>(normal(rng));
}

ForwardOptions with_channel(double snr_db) {
  ForwardOptions o;
  o.use_channel = true;
  o.channel.snr_db = snr_db;
  o.channel.seed = 11;
  return o;
}

}  // namespace

TEST_CASE("presets validate and report their token and symbol counts") {
  const ModelConfig paper = ModelConfig::paper(), desk = ModelConfig::desk();
  paper.validate();
  desk.validate();
  ModelConfig::tiny().validate();
  CHECK(paper.num_tokens() == 65);
  CHECK(paper.num_symbols() == 780);
  CHECK(desk.num_symbols() == 132);
  CHECK(ModelConfig::from_preset("tiny") == ModelConfig::tiny());
  CHECK_THROWS_AS(ModelConfig::from_preset("huge"), ConfigError);
}

TEST_CASE("config validation") {
  ModelConfig c = ModelConfig::desk();
  SUBCASE("odd channel width") { c.channel_dim = 7; }
  SUBCASE("heads do not divide the width") { c.heads = 5; }
  SUBCASE("more keys than points") { c.n_keys = c.n_points + 1; }
  SUBCASE("zero width") { c.conv2_width = 0; }
  SUBCASE("dropout of one") { c.dropout = 1.0; }
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(Model(c, 1), ConfigError);
}

TEST_CASE("config JSON round trip") {
  ModelConfig c = ModelConfig::tiny();
  c.fusion = Fusion::kConcatProject;
  c.dropout = 0.25;
  c.strict = true;
  CHECK(ModelConfig::from_json(c.to_json()) == c);
}

TEST_CASE("parameter count matches a layer-by-layer count") {
  CHECK(Model(ModelConfig::paper(), 1).parameters().numel() == 22321856);
  CHECK(counted_parameters(ModelConfig::paper()) == 22321856);
  for (const ModelConfig& c : {ModelConfig::desk(), ModelConfig::tiny()})
    CHECK(Model(c, 1).parameters().numel() == counted_parameters(c));
  ModelConfig cat = ModelConfig::tiny();
  cat.fusion = Fusion::kConcatProject;
  CHECK(Model(cat, 1).parameters().numel() == counted_parameters(cat));
}

TEST_CASE("initialization is seeded") {
  const Model a(ModelConfig::tiny(), 5), b(ModelConfig::tiny(), 5), c(ModelConfig::tiny(), 6);
  bool all_equal = true, any_differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    all_equal = all_equal && same_values(a.parameters().entries()[i].second, b.parameters().entries()[i].second);
    any_differs = any_differs || !same_values(a.parameters().entries()[i].second, c.parameters().entries()[i].second);
  }
  CHECK(all_equal);
  CHECK(any_differs);
  for (const auto& [name, t] : a.parameters().entries())
    if (name.ends_with(".bias") && !name.starts_with("enc.trunk.conv"))
      CHECK(std::all_of(t.data().begin(), t.data().end(), [](Real v) { return v == 0; }));
}

TEST_CASE("forward shapes across presets") {
  for (const ModelConfig& c : {ModelConfig::paper(), ModelConfig::desk(), ModelConfig::tiny()}) {
    CAPTURE(c.preset);
    Model model(c, 3);
    Rng rng(3);
    const ModelInput in = random_model_input(c, 2, rng);
    CHECK(in.keys.shape() == Shape{2, c.n_keys, 3});
    CHECK(in.groups.shape() == Shape{2, c.n_keys, c.group_size, 3});
    const ForwardOutput out = model.forward(in, with_channel(10));
    CHECK(out.tokens.tokens.shape() == Shape{2, c.num_tokens(), c.token_dim});
    CHECK(out.transmitted.symbols.shape() == Shape{2, c.num_symbols(), 2});
    CHECK(out.received.tokens.shape() == out.tokens.tokens.shape());
    CHECK(out.logits.shape() == Shape{2, c.num_classes});
  }
}

TEST_CASE("randomized configurations keep shapes consistent") {
  Rng rng(17);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 12; ++trial) {
    ModelConfig c = ModelConfig::tiny();
    c.heads = pick(1, 3);
    c.token_dim = c.heads * pick(1, 4);
    c.n_points = pick(8, 40);
    c.n_keys = pick(1, 6);
    c.group_size = pick(1, std::min<std::size_t>(8, c.n_points));
    c.channel_dim = 2 * pick(1, 4);
    c.transformer_blocks = pick(0, 2);
    c.num_classes = pick(2, 5);
    c.fusion = trial % 2 ? Fusion::kSum : Fusion::kConcatProject;
    CAPTURE(c.to_json());
    Model model(c, trial);
    const ModelInput in = random_model_input(c, 2, rng);
    const ForwardOutput out = model.forward(in, with_channel(5));
    CHECK(out.logits.shape() == Shape{2, c.num_classes});
    CHECK(out.transmitted.symbols.shape() == Shape{2, c.num_tokens() * c.channel_dim / 2, 2});
  }
}

TEST_CASE("positional embedding") {
  Model model(ModelConfig::tiny(), 4);
  randomize(model, 4);
  Rng rng(4);
  SUBCASE("zero output weights give the bias for every key") {
    Tensor& w = model.parameters().at("pos.fc2.weight");
    std::fill(w.data().begin(), w.data().end(), Real(0));
    const Tensor p = model.positional_embed(random_tensor({2, 4, 3}, rng, false));
    const auto bias = model.parameters().at("pos.fc2.bias").data();
    for (std::size_t i = 0; i < p.numel(); ++i) CHECK(p.data()[i] == bias[i % bias.size()]);
  }
  SUBCASE("identical keys give identical rows") {
    RealVector keys(4 * 3);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = Real(0.1) * static_cast<Real>(i % 3);
    const Tensor p = model.positional_embed(Tensor::from({1, 4, 3}, keys));
    for (std::size_t m = 1; m < 4; ++m)
      for (std::size_t j = 0; j < 12; ++j) CHECK(p.at({0, m, j}) == p.at({0, 0, j}));
  }
  SUBCASE("wrong key shape") { CHECK_THROWS_AS(model.positional_embed(Tensor::zeros({1, 4, 2})), ShapeError); }
}

TEST_CASE("sub-cloud encoder") {
  Model model(ModelConfig::tiny(), 5);
  randomize(model, 5);
  Rng rng(5);
  const Tensor groups = random_tensor({2, 4, 4, 3}, rng, false);
  const Tensor s = model.encode_subclouds(groups, true, false);
  CHECK(s.shape() == Shape{2, 4, 12});
  SUBCASE("permuting points inside a group leaves its feature unchanged") {
    const std::size_t perm[4] = {2, 0, 3, 1};
    RealVector shuffled(groups.numel());
    for (std::size_t g = 0; g < 8; ++g)
      for (std::size_t p = 0; p < 4; ++p)
        std::copy_n(groups.data().begin() + (g * 4 + perm[p]) * 3, 3, shuffled.begin() + (g * 4 + p) * 3);
    const Tensor s2 = model.encode_subclouds(Tensor::from(groups.shape(), shuffled), true, false);
    for (std::size_t i = 0; i < s.numel(); ++i) CHECK(s2.data()[i] == doctest::Approx(s.data()[i]).epsilon(1e-6));
  }
  SUBCASE("all-zero groups map to identical features") {
    const Tensor z = model.encode_subclouds(Tensor::zeros({1, 4, 4, 3}), true, false);
    for (std::size_t m = 1; m < 4; ++m)
      for (std::size_t j = 0; j < 12; ++j) CHECK(z.at({0, m, j}) == z.at({0, 0, j}));
  }
  SUBCASE("eval mode leaves running statistics alone") {
    const Tensor before = model.buffers().at("enc.trunk.bn1.running_mean").clone();
    model.encode_subclouds(groups, true, false);
    CHECK(same_values(before, model.buffers().at("enc.trunk.bn1.running_mean")));
    model.encode_subclouds(groups, true, true);
    CHECK_FALSE(same_values(before, model.buffers().at("enc.trunk.bn1.running_mean")));
  }
}

TEST_CASE("strict models reject uncentered sub-clouds") {
  ModelConfig c = ModelConfig::tiny();
  c.strict = true;
  Model model(c, 6);
  Rng rng(6);
  CHECK_THROWS_AS(model.encode_subclouds(random_tensor({1, 4, 4, 3}, rng, false), false, false), ContractError);
  c.strict = false;
  Model lenient(c, 6);
  CHECK_NOTHROW(lenient.encode_subclouds(random_tensor({1, 4, 4, 3}, rng, false), false, false));
}

TEST_CASE("semantic encoder") {
  ModelConfig c = ModelConfig::tiny();
  Rng rng(7);
  const Tensor p = random_tensor({2, 4, 12}, rng, false), s = random_tensor({2, 4, 12}, rng, false);
  SUBCASE("without blocks the tokens are the CLS row followed by S + P") {
    c.transformer_blocks = 0;
    Model model(c, 7);
    randomize(model, 7);
    const Tensor l = model.semantic_encode(p, s).tokens;
    REQUIRE(l.shape() == Shape{2, 5, 12});
    const auto token = model.parameters().at("cls.token").data(), pos = model.parameters().at("cls.pos").data();
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 12; ++j) {
        CHECK(l.at({b, 0, j}) == token[j] + pos[j]);
        for (std::size_t m = 0; m < 4; ++m) CHECK(l.at({b, m + 1, j}) == s.at({b, m, j}) + p.at({b, m, j}));
      }
  }
  SUBCASE("mismatched P and S") {
    Model model(c, 7);
    CHECK_THROWS_AS(model.semantic_encode(p, random_tensor({2, 3, 12}, rng, false)), ShapeError);
  }
}

TEST_CASE("semantic decoder") {
  Model model(ModelConfig::tiny(), 8);
  randomize(model, 8);
  Rng rng(8);
  const Tensor l = random_tensor({1, 5, 12}, rng, false);
  const Tensor logits = model.semantic_decode({l});
  SUBCASE("CLS token changes the logits") {
    Tensor changed = l.clone();
    changed.data()[0] += 1;
    CHECK_FALSE(same_values(logits, model.semantic_decode({changed})));
  }
  SUBCASE("a duplicated token does not change the max") {
    RealVector extra(l.data().begin(), l.data().end());
    extra.insert(extra.end(), l.data().begin() + 2 * 12, l.data().begin() + 3 * 12);
    CHECK(same_values(logits, model.semantic_decode({Tensor::from({1, 6, 12}, extra)})));
  }
  SUBCASE("permuting non-CLS tokens does not change the logits") {
    RealVector perm(l.data().begin(), l.data().end());
    std::swap_ranges(perm.begin() + 12, perm.begin() + 24, perm.begin() + 48);
    CHECK(same_values(logits, model.semantic_decode({Tensor::from({1, 5, 12}, perm)})));
  }
}

TEST_CASE("channel codec") {
  Model model(ModelConfig::tiny(), 9);
  randomize(model, 9);
  Rng rng(9);
  SUBCASE("encoded frames carry unit average power") {
    const SymbolFrame x = model.channel_encode({random_tensor({3, 5, 12}, rng, false)});
    CHECK(x.symbols.shape() == Shape{3, 10, 2});
    for (std::size_t b = 0; b < 3; ++b) CHECK(frame_power(x.symbols, b) == doctest::Approx(1.0).epsilon(1e-5));
  }
  SUBCASE("decoding a zero frame is deterministic and token independent") {
    const SymbolFrame zero{Tensor::zeros({1, 10, 2})};
    const Tensor a = model.channel_decode(zero).tokens, b = model.channel_decode(zero).tokens;
    CHECK(same_values(a, b));
    for (std::size_t t = 1; t < 5; ++t)
      for (std::size_t j = 0; j < 12; ++j) CHECK(a.at({0, t, j}) == doctest::Approx(a.at({0, 0, j})).epsilon(1e-6));
  }
  SUBCASE("frame length is checked") {
    CHECK_THROWS_AS(model.channel_decode({Tensor::zeros({1, 9, 2})}), ShapeError);
    CHECK_THROWS_AS(model.channel_encode({random_tensor({1, 4, 12}, rng, false)}), ShapeError);
  }
}

TEST_CASE("noiseless channel reproduces the no-channel pipeline up to the codec") {
  Model model(ModelConfig::tiny(), 10);
  Rng rng(10);
  const ModelInput in = random_model_input(model.config(), 2, rng);
  const ForwardOutput plain = model.forward(in, {});
  CHECK_FALSE(plain.transmitted.symbols.defined());
  const ForwardOutput a = model.forward(in, with_channel(kNoiselessSnr));
  const ForwardOutput b = model.forward(in, with_channel(kNoiselessSnr));
  CHECK(same_values(plain.tokens.tokens, a.tokens.tokens));
  CHECK(same_values(a.logits, b.logits));
}

TEST_CASE("parameter groups partition the parameters") {
  const Model model(ModelConfig::desk(), 1);
  const std::string_view groups[] = {param_group::kPositional,     param_group::kEncoderTrunk,
                                     param_group::kEncoderHead,    param_group::kCls,
                                     param_group::kFusion,         param_group::kTransformer,
                                     param_group::kChannelEncoder, param_group::kChannelDecoder,
                                     param_group::kSemanticDecoder};
  CHECK(model.select(groups).size() == model.parameters().size());
  const std::string_view codec[] = {param_group::kChannelEncoder, param_group::kChannelDecoder};
  CHECK(model.select(codec).size() == 8);
  CHECK_THROWS(model.parameters().at("nope"));
}

TEST_CASE("stage names round trip") {
  for (TrainingStage s : {TrainingStage::kStage1, TrainingStage::kStage2, TrainingStage::kJoint})
    CHECK(parse_stage_name(stage_name(s)) == s);
  CHECK_THROWS(parse_stage_name("stage3"));
}
