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

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "pcsc/channel.hpp"
#include "pcsc/dataset.hpp"
#include "pcsc/model.hpp"
#include "pcsc/training.hpp"

PCSC_BEGIN_NAMESPACE

/// Settings for one experiment, read from an INI file with the sections
/// [dataset], [model], [train], [channel] and [eval]. Every key is optional.
struct RunConfig {
  /// Existing dataset directory; when absent the synthetic generator runs.
  std::optional<std::filesystem::path> dataset_dir;
  SyntheticConfig synthetic;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;  // train.epochs is the stage-1 (and default) budget
  std::size_t stage2_epochs = 40;
  ChannelSpec channel;
  std::vector<double> sweep_snrs = kDefaultSweepSnrs;
  std::size_t eval_batch_size = 32;
  std::filesystem::path output_dir = ".";

  /// Throws ConfigError when a referenced path is missing or a section is
  /// internally inconsistent.
  void validate() const;
};

/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

/// Comma-separated dB values; "inf" is the noiseless sentinel.
std::vector<double> parse_snr_list(std::string_view text);

PCSC_END_NAMESPACE
