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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcsc/dataset.hpp"
#include "pcsc/evaluation.hpp"
#include "pcsc/model.hpp"

PCSC_BEGIN_NAMESPACE

/// Cosine annealing with warm restarts. Each restart multiplies the peak by
/// `decay` and the period by `period_multiplier`.
struct SgdrSchedule {
  std::size_t initial_period = 10;
  std::size_t period_multiplier = 2;
  double decay = 0.1;
  double floor_lr = 0.0;
};

enum class SnrPolicy { kPerEpoch, kPerBatch };

struct TrainConfig {
  TrainingStage stage = TrainingStage::kStage1;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double base_lr = 5e-4;
  double weight_decay = 0.05;
  SgdrSchedule schedule;
  double mse_weight = 1.0;
  SnrPolicy snr_policy = SnrPolicy::kPerEpoch;
  std::uint64_t seed = 1;
  bool augment = true;
  double grad_clip = 5.0;
  /// Also freeze the sub-cloud convolution trunk in stage 2.
  bool freeze_encoder_trunk = false;
  /// Evaluated on the test split every `eval_every` epochs and after the
  /// last one (0: last epoch only).
  std::vector<double> probe_snrs;
  std::size_t eval_every = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Learning rate for `epoch` (0-based).
double lr_schedule(std::size_t epoch, double base_lr, const SgdrSchedule& schedule);

struct ProbeResult {
  double snr_db = 0.0;
  double accuracy = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::vector<double> snr_db;  // channel SNRs drawn this epoch; empty without a channel
  double loss = 0.0;
  double ce = 0.0;
  double mse = 0.0;
  double train_accuracy = 0.0;
  std::vector<ProbeResult> probes;
  double wall_seconds = 0.0;
};

struct StepRecord {
  double loss = 0.0;
  double ce = 0.0;
  double mse = 0.0;
};

struct TrainReport {
  TrainingStage stage = TrainingStage::kStage1;
  double mse_weight = 0.0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::string checkpoint;

  /// One row per epoch: epoch, stage, lr, snr_db, loss, ce, mse,
  /// train_accuracy, probe columns, wall_s.
  std::string to_csv() const;
  std::string summary() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

/// Adaptive moments with decoupled weight decay (AdamW).
struct AdamState {
  RealVector m;
  RealVector v;
  std::size_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p.
void optimizer_step(std::span<Real> param, std::span<const Real> grad, AdamState& state, double lr,
                    double weight_decay, const AdamHyper& hyper = {});

class AdamW {
 public:
  explicit AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamHyper hyper = {});

  void zero_grad();
  void step(double lr, double weight_decay);
  /// Scales gradients so their global L2 norm is at most `max_norm`.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  bool tracks(std::string_view name) const;
  std::size_t size() const noexcept { return params_.size(); }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<AdamState> states_;
  AdamHyper hyper_;
};

/// Parameter prefixes frozen in stage 2.
std::vector<std::string_view> stage2_frozen_groups(const TrainConfig& config);

/// Stage 1: classification through the semantic path only (no channel).
/// The channel codec is left untouched.
TrainResult stage1_train(const Dataset& dataset, Model& model, const TrainConfig& config);

/// Stage 2: full system with CE + mse_weight * MSE(L, L_hat), one training
/// SNR per epoch (or per batch), transformer / positional / CLS frozen.
/// Requires a stage-1 checkpoint.
TrainResult stage2_train(const Dataset& dataset, const Checkpoint& stage1, const TrainConfig& config);

/// Ablation without the noiseless stage: every parameter trained jointly
/// from the given model through the noisy channel with the stage-2 loss.
TrainResult joint_train(const Dataset& dataset, Model& model, const TrainConfig& config);

/// Training-time augmentation: rotation about z and isotropic scaling in
/// [0.8, 1.2].
PointCloud augment_cloud(const PointCloud& cloud, Rng& rng);

PCSC_END_NAMESPACE
