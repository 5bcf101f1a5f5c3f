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

#include "pcsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "pcsc/ops.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

constexpr double kInitStd = 0.02;

Tensor truncated_normal(Shape shape, Rng& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  RealVector values(shape_numel(shape));
  for (auto& v : values) {
    double x;
    do {
      x = dist(rng);
    } while (std::abs(x) > 2.0 * kInitStd);
    v = static_cast<Real>(x);
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

std::string block_prefix(std::size_t i) { return std::string(param_group::kTransformer) + std::to_string(i) + "."; }

std::string fusion_name(Fusion f) { return f == Fusion::kSum ? "sum" : "concat_project"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "sum") return Fusion::kSum;
  if (s == "concat_project") return Fusion::kConcatProject;
  throw ConfigError("unknown fusion '" + s + "'");
}

}  // namespace

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.preset = "paper";
  c.n_points = 1024;
  c.n_keys = 64;
  c.group_size = 32;
  c.token_dim = 384;
  c.transformer_blocks = 12;
  c.heads = 6;
  c.channel_dim = 24;
  c.num_classes = 40;
  c.pos_hidden = 128;
  c.conv1_width = 128;
  c.conv2_width = 256;
  c.conv3_width = 512;
  c.conv4_width = 256;
  c.codec_hidden = 512;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.preset = "tiny";
  c.n_points = 24;
  c.n_keys = 4;
  c.group_size = 4;
  c.token_dim = 12;
  c.transformer_blocks = 1;
  c.heads = 2;
  c.channel_dim = 4;
  c.num_classes = 3;
  c.pos_hidden = 8;
  c.conv1_width = 6;
  c.conv2_width = 5;
  c.conv3_width = 7;
  c.conv4_width = 6;
  c.mlp_ratio = 2;
  c.codec_hidden = 9;
  return c;
}

ModelConfig ModelConfig::from_preset(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string("model: ") + what + " must be positive");
  };
  positive(n_points, "n_points");
  positive(n_keys, "n_keys");
  positive(group_size, "group_size");
  positive(token_dim, "token_dim");
  positive(heads, "heads");
  positive(channel_dim, "channel_dim");
  positive(num_classes, "num_classes");
  positive(pos_hidden, "pos_hidden");
  positive(conv1_width, "conv1_width");
  positive(conv2_width, "conv2_width");
  positive(conv3_width, "conv3_width");
  positive(conv4_width, "conv4_width");
  positive(mlp_ratio, "mlp_ratio");
  positive(codec_hidden, "codec_hidden");
  if (token_dim % heads != 0)
    throw ConfigError("model: token_dim " + std::to_string(token_dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  if (channel_dim % 2 != 0) throw ConfigError("model: channel_dim must be even to pair reals into complex symbols");
  if (n_keys > n_points) throw ConfigError("model: n_keys exceeds n_points");
  if (group_size > n_points) throw ConfigError("model: group_size exceeds n_points");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j = {
      {"preset", preset},
      {"n_points", n_points},
      {"n_keys", n_keys},
      {"group_size", group_size},
      {"token_dim", token_dim},
      {"transformer_blocks", transformer_blocks},
      {"heads", heads},
      {"channel_dim", channel_dim},
      {"num_classes", num_classes},
      {"pos_hidden", pos_hidden},
      {"conv1_width", conv1_width},
      {"conv2_width", conv2_width},
      {"conv3_width", conv3_width},
      {"conv4_width", conv4_width},
      {"mlp_ratio", mlp_ratio},
      {"codec_hidden", codec_hidden},
      {"fusion", fusion_name(fusion)},
      {"center_groups", center_groups},
      {"strict", strict},
      {"dropout", dropout},
  };
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.preset = j.at("preset").get<std::string>();
    c.n_points = j.at("n_points").get<std::size_t>();
    c.n_keys = j.at("n_keys").get<std::size_t>();
    c.group_size = j.at("group_size").get<std::size_t>();
    c.token_dim = j.at("token_dim").get<std::size_t>();
    c.transformer_blocks = j.at("transformer_blocks").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.channel_dim = j.at("channel_dim").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.pos_hidden = j.at("pos_hidden").get<std::size_t>();
    c.conv1_width = j.at("conv1_width").get<std::size_t>();
    c.conv2_width = j.at("conv2_width").get<std::size_t>();
    c.conv3_width = j.at("conv3_width").get<std::size_t>();
    c.conv4_width = j.at("conv4_width").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.codec_hidden = j.at("codec_hidden").get<std::size_t>();
    c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    c.center_groups = j.at("center_groups").get<bool>();
    c.strict = j.at("strict").get<bool>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelInput make_model_input(std::span<const GroupedBatch> clouds, std::span<const int> labels,
                            std::span<const std::uint64_t> sample_ids) {
  if (clouds.empty()) throw ArgumentError("make_model_input: empty batch");
  const std::size_t m = clouds[0].num_groups(), k = clouds[0].group_size;
  RealVector keys, groups;
  keys.reserve(clouds.size() * m * 3);
  groups.reserve(clouds.size() * m * k * 3);
  bool centered = true;
  for (const auto& c : clouds) {
    if (c.num_groups() != m || c.group_size != k) throw ShapeError("make_model_input: clouds grouped differently");
    centered = centered && c.centered;
    for (const auto& p : c.keys) keys.insert(keys.end(), p.begin(), p.end());
    for (const auto& p : c.groups) groups.insert(groups.end(), p.begin(), p.end());
  }
  ModelInput in;
  in.keys = Tensor::from({clouds.size(), m, 3}, std::move(keys));
  in.groups = Tensor::from({clouds.size(), m, k, 3}, std::move(groups));
  in.centered = centered;
  in.labels.assign(labels.begin(), labels.end());
  in.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  return in;
}

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ArgumentError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ArgumentError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), dropout_rng_(derive_seed(seed, {0xD0u})) {
  config_.validate();
  Rng rng = make_rng(seed, {0x1417u});
  const ModelConfig& c = config_;
  const std::size_t d = c.token_dim;
  auto weight = [&](const std::string& name, std::size_t out, std::size_t in) {
    params_.add(name + ".weight", truncated_normal({out, in}, rng));
    params_.add(name + ".bias", Tensor::zeros({out}, true));
  };
  // Kernel-size-1 convolutions see raw coordinates, so they use the
  // fan-in scaled uniform init instead of the small truncated normal.
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    RealVector w(out * in), b(out);
    for (auto& v : w) v = static_cast<Real>(u(rng));
    for (auto& v : b) v = static_cast<Real>(u(rng));
    params_.add(name + ".weight", Tensor::from({out, in}, std::move(w), true));
    params_.add(name + ".bias", Tensor::from({out}, std::move(b), true));
  };
  auto norm = [&](const std::string& name, std::size_t width) {
    params_.add(name + ".gamma", Tensor::full({width}, Real(1), true));
    params_.add(name + ".beta", Tensor::zeros({width}, true));
  };
  auto batch_norm = [&](const std::string& name, std::size_t width) {
    norm(name, width);
    buffers_.add(name + ".running_mean", Tensor::zeros({width}));
    buffers_.add(name + ".running_var", Tensor::full({width}, Real(1)));
  };

  const std::string pos(param_group::kPositional);
  weight(pos + "fc1", c.pos_hidden, 3);
  weight(pos + "fc2", d, c.pos_hidden);

  const std::string trunk(param_group::kEncoderTrunk);
  conv(trunk + "conv1", c.conv1_width, 3);
  batch_norm(trunk + "bn1", c.conv1_width);
  conv(trunk + "conv2", c.conv2_width, c.conv1_width);
  conv(trunk + "conv3", c.conv3_width, 2 * c.conv2_width);
  batch_norm(trunk + "bn2", c.conv3_width);
  conv(trunk + "conv4", c.conv4_width, c.conv3_width);
  weight(std::string(param_group::kEncoderHead) + "fc", d, c.conv4_width);

  const std::string cls(param_group::kCls);
  params_.add(cls + "token", truncated_normal({d}, rng));
  params_.add(cls + "pos", truncated_normal({d}, rng));
  if (c.fusion == Fusion::kConcatProject) weight(std::string(param_group::kFusion) + "proj", d, 2 * d);

  for (std::size_t i = 0; i < c.transformer_blocks; ++i) {
    const std::string b = block_prefix(i);
    norm(b + "ln1", d);
    weight(b + "attn.qkv", 3 * d, d);
    weight(b + "attn.proj", d, d);
    norm(b + "ln2", d);
    weight(b + "mlp.fc1", c.mlp_ratio * d, d);
    weight(b + "mlp.fc2", d, c.mlp_ratio * d);
  }

  const std::string enc(param_group::kChannelEncoder);
  weight(enc + "fc1", c.codec_hidden, d);
  weight(enc + "fc2", c.channel_dim, c.codec_hidden);
  const std::string dec(param_group::kChannelDecoder);
  weight(dec + "fc1", c.codec_hidden, c.channel_dim);
  weight(dec + "fc2", d, c.codec_hidden);
  weight(std::string(param_group::kSemanticDecoder) + "fc", c.num_classes, 2 * d);
}

Tensor Model::positional_embed(const Tensor& keys) const {
  if (keys.rank() != 3 || keys.dim(2) != 3)
    throw ShapeError("positional_embed: expected [B, M, 3], got " + shape_to_string(keys.shape()));
  const std::string pos(param_group::kPositional);
  const Tensor h = ops::gelu(ops::linear(keys, params_.at(pos + "fc1.weight"), params_.at(pos + "fc1.bias")));
  return ops::linear(h, params_.at(pos + "fc2.weight"), params_.at(pos + "fc2.bias"));
}

Tensor Model::encode_subclouds(const Tensor& groups, bool centered, bool training) {
  if (groups.rank() != 4 || groups.dim(3) != 3)
    throw ShapeError("encode_subclouds: expected [B, M, k, 3], got " + shape_to_string(groups.shape()));
  if (config_.strict && config_.center_groups && !centered)
    throw ContractError("encode_subclouds: sub-clouds must be key-centered");
  const std::size_t batch = groups.dim(0), m = groups.dim(1), k = groups.dim(2);
  const std::string t(param_group::kEncoderTrunk);
  auto conv = [&](const Tensor& x, const std::string& name) {
    return ops::pointwise_linear(x, params_.at(t + name + ".weight"), params_.at(t + name + ".bias"));
  };
  auto bn = [&](const Tensor& x, const std::string& name) {
    return ops::batch_norm_1d(x, params_.at(t + name + ".gamma"), params_.at(t + name + ".beta"),
                              buffers_.at(t + name + ".running_mean"), buffers_.at(t + name + ".running_var"),
                              training);
  };
  // [B*M, 3, k]: one kernel-size-1 convolution input per sub-cloud
  Tensor x = ops::transpose_last2(ops::reshape(groups, {batch * m, k, 3}));
  x = conv(ops::relu(bn(conv(x, "conv1"), "bn1")), "conv2");
  const Tensor global = ops::broadcast_axis(ops::max_pool(x, 2), 2, k);
  x = ops::concat({global, x}, 1);
  x = conv(ops::relu(bn(conv(x, "conv3"), "bn2")), "conv4");
  const std::string head(param_group::kEncoderHead);
  x = ops::linear(ops::max_pool(x, 2), params_.at(head + "fc.weight"), params_.at(head + "fc.bias"));
  return ops::reshape(x, {batch, m, config_.token_dim});
}

Tensor Model::transformer_block(const Tensor& x, std::size_t index, bool training) const {
  const std::string b = block_prefix(index);
  const auto& p = params_;
  const Real drop = static_cast<Real>(config_.dropout);
  const ops::AttentionParams attn{p.at(b + "attn.qkv.weight"), p.at(b + "attn.qkv.bias"), p.at(b + "attn.proj.weight"),
                                  p.at(b + "attn.proj.bias")};
  Tensor h = ops::layer_norm(x, p.at(b + "ln1.gamma"), p.at(b + "ln1.beta"));
  h = ops::dropout(ops::multi_head_self_attention(h, config_.heads, attn), drop, dropout_rng_, training);
  const Tensor y = ops::add(x, h);
  h = ops::layer_norm(y, p.at(b + "ln2.gamma"), p.at(b + "ln2.beta"));
  h = ops::gelu(ops::linear(h, p.at(b + "mlp.fc1.weight"), p.at(b + "mlp.fc1.bias")));
  h = ops::linear(h, p.at(b + "mlp.fc2.weight"), p.at(b + "mlp.fc2.bias"));
  return ops::add(y, ops::dropout(h, drop, dropout_rng_, training));
}

TokenEmbeddings Model::semantic_encode(const Tensor& positional, const Tensor& semantic, bool training) const {
  if (positional.shape() != semantic.shape() || positional.rank() != 3 || positional.dim(2) != config_.token_dim)
    throw ShapeError("semantic_encode: P " + shape_to_string(positional.shape()) + " vs S " +
                     shape_to_string(semantic.shape()));
  const std::size_t batch = semantic.dim(0), d = config_.token_dim;
  const std::string cls(param_group::kCls);
  Tensor tokens, cls_token;
  if (config_.fusion == Fusion::kSum) {
    tokens = ops::add(semantic, positional);
    cls_token = ops::add(params_.at(cls + "token"), params_.at(cls + "pos"));
  } else {
    const std::string f(param_group::kFusion);
    const Tensor& w = params_.at(f + "proj.weight");
    const Tensor& bias = params_.at(f + "proj.bias");
    tokens = ops::linear(ops::concat({semantic, positional}, 2), w, bias);
    const Tensor pair = ops::concat({ops::reshape(params_.at(cls + "token"), {1, d}),
                                     ops::reshape(params_.at(cls + "pos"), {1, d})}, 1);
    cls_token = ops::reshape(ops::linear(pair, w, bias), {d});
  }
  // [D] -> [B, 1, D]
  const Tensor cls_row = ops::broadcast_axis(ops::broadcast_axis(cls_token, 0, 1), 0, batch);
  Tensor x = ops::concat({cls_row, tokens}, 1);
  for (std::size_t i = 0; i < config_.transformer_blocks; ++i) x = transformer_block(x, i, training);
  return TokenEmbeddings{x};
}

SymbolFrame Model::channel_encode(const TokenEmbeddings& tokens) const {
  const Tensor& l = tokens.tokens;
  if (l.rank() != 3 || l.dim(1) != config_.num_tokens() || l.dim(2) != config_.token_dim)
    throw ShapeError("channel_encode: unexpected token shape " + shape_to_string(l.shape()));
  const std::string e(param_group::kChannelEncoder);
  Tensor h = ops::relu(ops::linear(l, params_.at(e + "fc1.weight"), params_.at(e + "fc1.bias")));
  h = ops::linear(h, params_.at(e + "fc2.weight"), params_.at(e + "fc2.bias"));
  return normalize_power(ops::reshape(h, {l.dim(0), config_.num_symbols(), 2}));
}

TokenEmbeddings Model::channel_decode(const SymbolFrame& received) const {
  const Tensor& y = received.symbols;
  if (y.rank() != 3 || y.dim(1) != config_.num_symbols() || y.dim(2) != 2)
    throw ShapeError("channel_decode: frame " + shape_to_string(y.shape()) + " does not match " +
                     std::to_string(config_.num_symbols()) + " symbols");
  const std::string dname(param_group::kChannelDecoder);
  Tensor h = ops::reshape(y, {y.dim(0), config_.num_tokens(), config_.channel_dim});
  h = ops::relu(ops::linear(h, params_.at(dname + "fc1.weight"), params_.at(dname + "fc1.bias")));
  return TokenEmbeddings{ops::linear(h, params_.at(dname + "fc2.weight"), params_.at(dname + "fc2.bias"))};
}

Tensor Model::semantic_decode(const TokenEmbeddings& tokens) const {
  const Tensor& l = tokens.tokens;
  if (l.rank() != 3 || l.dim(1) < 2 || l.dim(2) != config_.token_dim)
    throw ShapeError("semantic_decode: unexpected token shape " + shape_to_string(l.shape()));
  const std::size_t batch = l.dim(0), d = config_.token_dim;
  const Tensor cls = ops::reshape(ops::slice(l, 1, 0, 1), {batch, d});
  const Tensor pooled = ops::max_pool(ops::slice(l, 1, 1, l.dim(1)), 1);
  const std::string dec(param_group::kSemanticDecoder);
  return ops::linear(ops::concat({cls, pooled}, 1), params_.at(dec + "fc.weight"), params_.at(dec + "fc.bias"));
}

ForwardOutput Model::forward(const ModelInput& input, const ForwardOptions& options) {
  ForwardOutput out;
  const Tensor p = positional_embed(input.keys);
  const Tensor s = encode_subclouds(input.groups, input.centered, options.training && options.update_batch_norm);
  out.tokens = semantic_encode(p, s, options.training);
  if (!options.use_channel) {
    out.logits = semantic_decode(out.tokens);
    return out;
  }
  out.transmitted = channel_encode(out.tokens);
  const SymbolFrame received = transmit(out.transmitted, options.channel, input.sample_ids, config_.strict);
  out.received = channel_decode(received);
  out.logits = semantic_decode(out.received);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::select(std::span<const std::string_view> prefixes) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : params_.entries())
    for (auto prefix : prefixes)
      if (name.starts_with(prefix)) {
        out.emplace_back(name, t);
        break;
      }
  return out;
}

std::string stage_name(TrainingStage stage) {
  switch (stage) {
    case TrainingStage::kStage1:
      return "stage1";
    case TrainingStage::kStage2:
      return "stage2";
    case TrainingStage::kJoint:
      return "joint";
  }
  return "stage1";
}

TrainingStage parse_stage_name(std::string_view name) {
  if (name == "stage1") return TrainingStage::kStage1;
  if (name == "stage2") return TrainingStage::kStage2;
  if (name == "joint") return TrainingStage::kJoint;
  throw FormatError("unknown training stage tag '" + std::string(name) + "'");
}

PCSC_END_NAMESPACE
