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

#include "pcsc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pcsc/ops.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kShuffleStream = 0x5F;
constexpr std::uint64_t kAugmentStream = 0xA0;
constexpr std::uint64_t kFpsStream = 0xF0;
constexpr std::uint64_t kNoiseStream = 0xC4;
constexpr std::uint64_t kSnrStream = 0x5A12;

void check_dataset(const Dataset& dataset, const Model& model) {
  if (static_cast<std::size_t>(dataset.manifest.num_classes) != model.config().num_classes)
    throw ConfigError("dataset has " + std::to_string(dataset.manifest.num_classes) + " classes, model expects " +
                      std::to_string(model.config().num_classes));
  if (dataset.train.empty()) throw ConfigError("training split is empty");
}

struct LoopOptions {
  bool use_channel = false;
  bool update_batch_norm = true;
};

TrainReport run_loop(const Dataset& dataset, Model& model, const TrainConfig& config, const LoopOptions& loop,
                     Rng& rng) {
  std::vector<std::pair<std::string, Tensor>> trainable;
  for (const auto& [name, t] : model.parameters().entries())
    if (t.requires_grad()) trainable.emplace_back(name, t);
  AdamW optimizer(std::move(trainable));

  const ModelConfig& mc = model.config();
  const std::size_t n_train = dataset.train.size();
  PreparedSplit test;
  if (!config.probe_snrs.empty()) test = prepare_split(dataset.test, mc, config.batch_size);

  TrainReport report;
  report.stage = config.stage;
  report.mse_weight = config.mse_weight;
  Rng snr_rng = make_rng(config.seed, {kSnrStream});
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_schedule(epoch, config.base_lr, config.schedule);

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, {epoch, kShuffleStream});
    std::shuffle(order.begin(), order.end(), shuffle);

    double epoch_snr = kNoiselessSnr;
    if (loop.use_channel && config.snr_policy == SnrPolicy::kPerEpoch) {
      epoch_snr = sample_training_snr(snr_rng);
      rec.snr_db.push_back(epoch_snr);
    }

    double sum_loss = 0, sum_ce = 0, sum_mse = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n_train; begin += config.batch_size, ++global_step) {
      const std::size_t end = std::min(n_train, begin + config.batch_size);
      std::vector<GroupedBatch> grouped;
      std::vector<int> labels;
      std::vector<std::uint64_t> ids;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order[i];
        const PointCloud& source = dataset.train[idx];
        PointCloud cloud;
        if (config.augment) {
          Rng aug = make_rng(config.seed, {epoch, idx, kAugmentStream});
          cloud = augment_cloud(source, aug);
        }
        const PointCloud& used = config.augment ? cloud : source;
        grouped.push_back(group_cloud(used, mc.n_keys, mc.group_size, FpsStart::kSeededRandom,
                                      derive_seed(config.seed, {epoch, idx, kFpsStream}), mc.center_groups));
        labels.push_back(source.label.value_or(-1));
        ids.push_back(epoch * n_train + idx);
      }
      const ModelInput input = make_model_input(grouped, labels, ids);

      ForwardOptions options;
      options.training = true;
      options.update_batch_norm = loop.update_batch_norm;
      options.use_channel = loop.use_channel;
      if (loop.use_channel) {
        double snr = epoch_snr;
        if (config.snr_policy == SnrPolicy::kPerBatch) {
          snr = sample_training_snr(snr_rng);
          rec.snr_db.push_back(snr);
        }
        options.channel = ChannelSpec::awgn(snr, derive_seed(config.seed, {epoch, global_step, kNoiseStream}));
      }
      const ForwardOutput out = model.forward(input, options);

      const Tensor ce = ops::cross_entropy(out.logits, labels);
      Tensor loss = ce;
      double mse_value = 0.0;
      if (loop.use_channel) {
        const Tensor mse = ops::mse(out.tokens.tokens, out.received.tokens);
        loss = ops::add(ce, ops::scale(mse, static_cast<Real>(config.mse_weight)));
        mse_value = mse.item();
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.clip_grad_norm(config.grad_clip);
      optimizer.step(rec.lr, config.weight_decay);

      const double b = static_cast<double>(end - begin);
      report.steps.push_back({loss.item(), ce.item(), mse_value});
      sum_loss += loss.item() * b;
      sum_ce += ce.item() * b;
      sum_mse += mse_value * b;
      const std::size_t classes = out.logits.dim(1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto row = out.logits.data().subspan(r * classes, classes);
        if (std::max_element(row.begin(), row.end()) - row.begin() == labels[r]) ++correct;
      }
    }
    const double n = static_cast<double>(n_train);
    rec.loss = sum_loss / n;
    rec.ce = sum_ce / n;
    rec.mse = sum_mse / n;
    rec.train_accuracy = static_cast<double>(correct) / n;

    const bool last = epoch + 1 == config.epochs;
    const bool due = config.eval_every > 0 && (epoch + 1) % config.eval_every == 0;
    if (!config.probe_snrs.empty() && (last || due)) {
      for (double snr : config.probe_snrs) {
        const ChannelSpec spec = ChannelSpec::awgn(snr, derive_seed(config.seed, {epoch, 0xE7}));
        const bool through = loop.use_channel || !spec.noiseless();
        rec.probes.push_back({snr, evaluate(model, test, spec, through).accuracy()});
      }
    }
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    report.epochs.push_back(std::move(rec));
  }
  return report;
}

std::string join_snrs(const std::vector<double>& snrs) {
  if (snrs.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    if (i) out += ';';
    out += format_real(snrs[i]);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
  if (!(mse_weight >= 0.0)) throw ConfigError("train: mse_weight must be non-negative");
  if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
  if (!(schedule.decay > 0.0 && schedule.decay <= 1.0)) throw ConfigError("train: lr decay must lie in (0, 1]");
  if (schedule.initial_period == 0 || schedule.period_multiplier == 0)
    throw ConfigError("train: restart period and multiplier must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("train: grad_clip must be positive");
  for (double s : probe_snrs)
    if (std::isnan(s)) throw ConfigError("train: probe SNR is NaN");
}

double lr_schedule(std::size_t epoch, double base_lr, const SgdrSchedule& schedule) {
  std::size_t start = 0, period = schedule.initial_period;
  double peak = base_lr;
  while (epoch >= start + period) {
    start += period;
    period *= schedule.period_multiplier;
    peak *= schedule.decay;
  }
  const double t = static_cast<double>(epoch - start) / static_cast<double>(period);
  return schedule.floor_lr + (peak - schedule.floor_lr) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void optimizer_step(std::span<Real> param, std::span<const Real> grad, AdamState& state, double lr,
                    double weight_decay, const AdamHyper& hyper) {
  if (param.size() != grad.size()) throw Error("optimizer_step: parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(param.size(), Real(0));
    state.v.assign(param.size(), Real(0));
  }
  if (state.m.size() != param.size()) throw Error("optimizer_step: optimizer state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    const double v = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    state.m[i] = static_cast<Real>(m);
    state.v[i] = static_cast<Real>(v);
    const double p = param[i];
    param[i] = static_cast<Real>(p - lr * (m / c1) / (std::sqrt(v / c2) + hyper.eps) - lr * weight_decay * p);
  }
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamHyper hyper)
    : params_(std::move(params)), states_(params_.size()), hyper_(hyper) {
  for (const auto& [name, t] : params_)
    if (!t.requires_grad()) throw ArgumentError("AdamW: parameter '" + name + "' is frozen");
}

void AdamW::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void AdamW::step(double lr, double weight_decay) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].second;
    if (!t.has_grad()) continue;
    optimizer_step(t.data(), t.grad(), states_[i], lr, weight_decay, hyper_);
  }
}

double AdamW::clip_grad_norm(double max_norm) {
  double total = 0;
  for (const auto& [name, t] : params_)
    for (Real g : t.grad()) total += static_cast<double>(g) * g;
  const double norm = std::sqrt(total);
  if (norm > max_norm) {
    const auto factor = static_cast<Real>(max_norm / (norm + 1e-12));
    for (auto& [name, t] : params_)
      if (t.has_grad())
        for (Real& g : t.mutable_grad()) g *= factor;
  }
  return norm;
}

bool AdamW::tracks(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.first == name; });
}

std::vector<std::string_view> stage2_frozen_groups(const TrainConfig& config) {
  std::vector<std::string_view> groups{param_group::kTransformer, param_group::kPositional, param_group::kCls,
                                       param_group::kFusion};
  if (config.freeze_encoder_trunk) groups.push_back(param_group::kEncoderTrunk);
  return groups;
}

PointCloud augment_cloud(const PointCloud& cloud, Rng& rng) {
  const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const double s = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
  const double c = std::cos(angle) * s, sn = std::sin(angle) * s;
  PointCloud out = cloud;
  for (auto& p : out.points) {
    const double x = p[0], y = p[1];
    p = {static_cast<float>(c * x - sn * y), static_cast<float>(sn * x + c * y), static_cast<float>(s * p[2])};
  }
  return out;
}

TrainResult stage1_train(const Dataset& dataset, Model& model, const TrainConfig& config) {
  config.validate();
  check_dataset(dataset, model);
  model.set_trainable([](const std::string& name) {
    return !name.starts_with(param_group::kChannelEncoder) && !name.starts_with(param_group::kChannelDecoder);
  });
  Rng rng = make_rng(config.seed, {1});
  TrainResult result;
  result.report = run_loop(dataset, model, config, {.use_channel = false, .update_batch_norm = true}, rng);
  result.report.stage = TrainingStage::kStage1;
  result.checkpoint = Checkpoint::capture(model, TrainingStage::kStage1, &rng);
  return result;
}

TrainResult stage2_train(const Dataset& dataset, const Checkpoint& stage1, const TrainConfig& config) {
  config.validate();
  if (stage1.stage != TrainingStage::kStage1)
    throw ConfigError("stage 2 needs a stage1 checkpoint, got '" + stage_name(stage1.stage) + "'");
  Model model = stage1.restore();
  check_dataset(dataset, model);
  const auto frozen = stage2_frozen_groups(config);
  model.set_trainable([&](const std::string& name) {
    return std::none_of(frozen.begin(), frozen.end(), [&](std::string_view p) { return name.starts_with(p); });
  });
  Rng rng = make_rng(config.seed, {2});
  stage1.restore_rng(rng);
  TrainResult result;
  result.report = run_loop(dataset, model, config,
                           {.use_channel = true, .update_batch_norm = !config.freeze_encoder_trunk}, rng);
  result.report.stage = TrainingStage::kStage2;
  result.checkpoint = Checkpoint::capture(model, TrainingStage::kStage2, &rng);
  return result;
}

TrainResult joint_train(const Dataset& dataset, Model& model, const TrainConfig& config) {
  config.validate();
  check_dataset(dataset, model);
  model.set_trainable([](const std::string&) { return true; });
  Rng rng = make_rng(config.seed, {3});
  TrainResult result;
  result.report = run_loop(dataset, model, config, {.use_channel = true, .update_batch_norm = true}, rng);
  result.report.stage = TrainingStage::kJoint;
  result.checkpoint = Checkpoint::capture(model, TrainingStage::kJoint, &rng);
  return result;
}

std::string TrainReport::to_csv() const {
  std::vector<double> probe_snrs;
  for (const auto& e : epochs)
    for (const auto& p : e.probes)
      if (std::find(probe_snrs.begin(), probe_snrs.end(), p.snr_db) == probe_snrs.end()) probe_snrs.push_back(p.snr_db);
  std::ostringstream out;
  out << "epoch,stage,lr,snr_db,loss,ce,mse,train_accuracy";
  for (double s : probe_snrs) out << ",acc@" << format_snr(s);
  out << ",wall_s\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << stage_name(stage) << ',' << format_real(e.lr) << ',' << join_snrs(e.snr_db) << ','
        << format_real(e.loss) << ',' << format_real(e.ce) << ',' << format_real(e.mse) << ','
        << format_real(e.train_accuracy);
    for (double s : probe_snrs) {
      out << ',';
      for (const auto& p : e.probes)
        if (p.snr_db == s) out << format_real(p.accuracy);
    }
    out << ',' << format_real(e.wall_seconds) << '\n';
  }
  return out.str();
}

std::string TrainReport::summary() const {
  std::ostringstream out;
  out << stage_name(stage) << ": " << epochs.size() << " epochs";
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    out << ", final loss " << last.loss << ", train accuracy " << last.train_accuracy;
    for (const auto& p : last.probes) out << ", acc@" << format_snr(p.snr_db) << " " << p.accuracy;
    double wall = 0;
    for (const auto& e : epochs) wall += e.wall_seconds;
    out << ", " << wall << " s";
  }
  if (!checkpoint.empty()) out << " -> " << checkpoint;
  return out.str();
}

PCSC_END_NAMESPACE
