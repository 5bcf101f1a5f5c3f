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

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcsc/channel.hpp"
#include "pcsc/dataset.hpp"
#include "pcsc/model.hpp"

PCSC_BEGIN_NAMESPACE

/// A split grouped once (FPS from index 0) and cut into model-ready batches.
struct PreparedSplit {
  std::vector<ModelInput> batches;
  std::size_t size = 0;
};

PreparedSplit prepare_split(std::span<const PointCloud> clouds, const ModelConfig& config,
                            std::size_t batch_size = 32);

struct EvalResult {
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::vector<int> predictions;
  double seconds = 0.0;

  double accuracy() const {
    return n_total == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_total);
  }
};

/// Whether a checkpoint of `stage` routes evaluation through its channel
/// codec. A stage-1 model bypasses the codec only on the noiseless link.
bool uses_channel(TrainingStage stage, const ChannelSpec& spec);

/// Inference in eval mode over a prepared split. Throws ConfigError when
/// the model and split disagree on the class count.
EvalResult evaluate(Model& model, const PreparedSplit& split, const ChannelSpec& spec, bool use_channel);

struct SweepRow {
  double snr_db = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  double latency_seconds = 0.0;  // mean per cloud

  double accuracy() const {
    return n_total == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n_total);
  }
  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string checkpoint_id;
  ChannelKind channel = ChannelKind::kAwgn;
  std::uint64_t seed = 0;

  /// Header row then one row per SNR; '#' lines carry metadata.
  std::string to_csv() const;
  static SweepResult from_csv(std::string_view text);
  double mean_accuracy() const;
  bool operator==(const SweepResult&) const = default;
};

inline const std::vector<double> kDefaultSweepSnrs = {0.0, 4.0, 8.0, 12.0, 16.0, 20.0};

/// One evaluate() per SNR over AWGN with a per-SNR noise seed derived from
/// `seed`; rows ascend by SNR. Duplicate SNRs are rejected.
SweepResult snr_sweep(Model& model, TrainingStage stage, const PreparedSplit& split,
                      std::span<const double> snrs, std::uint64_t seed, std::string checkpoint_id = {});

/// Transmitted real dimensions over input real dimensions:
/// (M + 1) d_c / (n_points * 3).
double compression_ratio(const ModelConfig& config);

struct LatencyReport {
  std::size_t clouds = 0;
  std::vector<double> run_seconds;
  double min_seconds = 0.0;
  double median_seconds = 0.0;
  double per_cloud_seconds = 0.0;  // median / clouds
};

/// Times grouping plus inference over every cloud, `repetitions` >= 3 times.
LatencyReport bench_latency(Model& model, TrainingStage stage, std::span<const PointCloud> clouds,
                            const ChannelSpec& spec, std::size_t repetitions = 3, std::size_t batch_size = 32);

/// Format an SNR for CSV output: "inf" for the noiseless sentinel.
std::string format_snr(double snr_db);
double parse_snr(std::string_view text);

/// Shortest round-trip decimal form.
std::string format_real(double value);

PCSC_END_NAMESPACE
