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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcsc/channel.hpp"
#include "pcsc/geometry.hpp"
#include "pcsc/tensor.hpp"

PCSC_BEGIN_NAMESPACE

/// How the positional embedding P and sub-cloud feature S are fused into
/// transformer input tokens.
enum class Fusion {
  kSum,            // P + S
  kConcatProject,  // linear([S, P]) from 2D to D
};

struct ModelConfig {
  std::string preset = "desk";
  std::size_t n_points = 256;
  std::size_t n_keys = 32;
  std::size_t group_size = 16;
  std::size_t token_dim = 96;
  std::size_t transformer_blocks = 2;
  std::size_t heads = 3;
  std::size_t channel_dim = 8;
  std::size_t num_classes = 8;

  // Layer widths. The paper preset uses 128 / 128-256 / 512-256 / 512.
  std::size_t pos_hidden = 64;
  std::size_t conv1_width = 32;
  std::size_t conv2_width = 64;
  std::size_t conv3_width = 128;
  std::size_t conv4_width = 64;
  std::size_t mlp_ratio = 4;
  std::size_t codec_hidden = 128;

  Fusion fusion = Fusion::kSum;
  bool center_groups = true;
  bool strict = false;
  double dropout = 0.0;

  static ModelConfig paper();
  static ModelConfig desk();
  /// Tiny network for whole-model gradient checks.
  static ModelConfig tiny();
  static ModelConfig from_preset(std::string_view name);

  std::size_t num_tokens() const { return n_keys + 1; }
  std::size_t num_symbols() const { return num_tokens() * channel_dim / 2; }

  /// Throws ConfigError when widths are inconsistent.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);
  bool operator==(const ModelConfig&) const = default;
};

/// Transformer tokens [B, M+1, D]; token 0 is the CLS token.
struct TokenEmbeddings {
  Tensor tokens;

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t count() const { return tokens.dim(1); }
};

/// Model-ready tensors for a batch of clouds.
struct ModelInput {
  Tensor keys;    // [B, M, 3]
  Tensor groups;  // [B, M, k, 3]
  bool centered = true;
  std::vector<int> labels;
  std::vector<std::uint64_t> sample_ids;  // channel noise stream per sample
};

/// Stacks grouped clouds into model input.
ModelInput make_model_input(std::span<const GroupedBatch> clouds, std::span<const int> labels,
                            std::span<const std::uint64_t> sample_ids);

struct ForwardOptions {
  bool training = false;
  /// Batch-norm layers use batch statistics and update running buffers.
  /// Ignored unless `training`.
  bool update_batch_norm = true;
  bool use_channel = false;
  ChannelSpec channel;
};

struct ForwardOutput {
  Tensor logits;       // [B, num_classes]
  TokenEmbeddings tokens;    // L
  TokenEmbeddings received;  // L_hat; undefined without a channel
  SymbolFrame transmitted;   // X; undefined without a channel
};

/// Named tensors in registration order.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor tensor);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t numel() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Parameter name prefixes of each sub-network.
namespace param_group {
inline constexpr std::string_view kPositional = "pos.";
inline constexpr std::string_view kEncoderTrunk = "enc.trunk.";
inline constexpr std::string_view kEncoderHead = "enc.head.";
inline constexpr std::string_view kCls = "cls.";
inline constexpr std::string_view kFusion = "fuse.";
inline constexpr std::string_view kTransformer = "blocks.";
inline constexpr std::string_view kChannelEncoder = "chenc.";
inline constexpr std::string_view kChannelDecoder = "chdec.";
inline constexpr std::string_view kSemanticDecoder = "dec.";
}  // namespace param_group

/// Positional MLP, sub-cloud encoder, transformer, channel codec and
/// classifier head.
class Model {
 public:
  /// Random initialization: truncated normal (std 0.02, cut at 2 std) for
  /// weights and embeddings, zero biases, unit norm scales.
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  /// Batch-norm running statistics; saved with checkpoints, never trained.
  ParameterSet& buffers() noexcept { return buffers_; }
  const ParameterSet& buffers() const noexcept { return buffers_; }

  /// Per-key MLP 3 -> pos_hidden (GELU) -> D. keys [B, M, 3] -> [B, M, D].
  Tensor positional_embed(const Tensor& keys) const;

  /// Two shared-MLP stages with a max-pooled global feature between them,
  /// then FC to D. groups [B, M, k, 3] -> [B, M, D]. Mutates batch-norm
  /// running statistics when training.
  Tensor encode_subclouds(const Tensor& groups, bool centered, bool training);

  /// Fuses P and S, prepends the CLS token and runs the transformer stack.
  TokenEmbeddings semantic_encode(const Tensor& positional, const Tensor& semantic,
                                  bool training = false) const;

  /// Per-token FC D -> hidden (ReLU) -> d_c, paired into complex symbols and
  /// power-normalized: [B, (M+1) d_c / 2, 2].
  SymbolFrame channel_encode(const TokenEmbeddings& tokens) const;

  /// Inverse of channel_encode's reshaping, then FC d_c -> hidden (ReLU) -> D.
  TokenEmbeddings channel_decode(const SymbolFrame& received) const;

  /// concat(CLS token, max over tokens 1..M) -> FC to num_classes.
  Tensor semantic_decode(const TokenEmbeddings& tokens) const;

  ForwardOutput forward(const ModelInput& input, const ForwardOptions& options);

  /// Tensors whose names start with any of `prefixes`.
  std::vector<std::pair<std::string, Tensor>> select(std::span<const std::string_view> prefixes) const;

  /// Sets requires_grad on every parameter according to `trainable(name)`.
  template <typename Pred>
  void set_trainable(Pred trainable) {
    for (auto& [name, t] : params_.entries()) t.set_requires_grad(trainable(name));
  }

 private:
  Tensor transformer_block(const Tensor& x, std::size_t index, bool training) const;

  ModelConfig config_;
  ParameterSet params_;
  ParameterSet buffers_;
  mutable Rng dropout_rng_;
};

enum class TrainingStage { kStage1, kStage2, kJoint };
std::string stage_name(TrainingStage stage);
TrainingStage parse_stage_name(std::string_view name);

/// Serialized model state.
///
/// Binary layout (little-endian):
///   "PCCK" | u32 version | u32 element size (4 or 8)
///   u32 stage-tag length | stage tag
///   u64 config length | config JSON
///   u64 rng-state length | RNG state text
///   u32 tensor count | per tensor: u32 name length, name, u32 rank,
///                      u64 dims..., u64 byte offset into the data block
///   data block of raw tensor values
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  TrainingStage stage = TrainingStage::kStage1;
  std::string rng_state;
  struct Entry {
    std::string name;
    Shape shape;
    RealVector values;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> tensors;

  static Checkpoint capture(const Model& model, TrainingStage stage, const Rng* rng = nullptr);
  /// Rebuilds a model; throws FormatError on missing or mis-shaped tensors.
  Model restore() const;
  /// Restores the saved RNG state into `rng` (no-op when none was saved).
  void restore_rng(Rng& rng) const;

  std::string to_bytes() const;
  static Checkpoint from_bytes(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

PCSC_END_NAMESPACE
