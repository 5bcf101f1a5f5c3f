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

#include "pcsc/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

PCSC_BEGIN_NAMESPACE

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view s, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError(line, "invalid count '" + std::string(s) + "'");
  return v;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError(line, "invalid number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string format_real(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_snr(double snr_db) { return format_real(snr_db); }

double parse_snr(std::string_view text) {
  if (text == "inf" || text == "+inf") return kNoiselessSnr;
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ConfigError("invalid SNR '" + std::string(text) + "'");
  return v;
}

PreparedSplit prepare_split(std::span<const PointCloud> clouds, const ModelConfig& config, std::size_t batch_size) {
  if (batch_size == 0) throw ArgumentError("prepare_split: batch size must be positive");
  PreparedSplit split;
  split.size = clouds.size();
  for (std::size_t start = 0; start < clouds.size(); start += batch_size) {
    const std::size_t end = std::min(clouds.size(), start + batch_size);
    std::vector<GroupedBatch> grouped;
    std::vector<int> labels;
    std::vector<std::uint64_t> ids;
    for (std::size_t i = start; i < end; ++i) {
      if (clouds[i].size() < config.n_points)
        throw ConfigError("cloud " + std::to_string(i) + " has " + std::to_string(clouds[i].size()) +
                          " points, model expects " + std::to_string(config.n_points));
      grouped.push_back(group_cloud(clouds[i], config.n_keys, config.group_size, FpsStart::kFirstIndex, 0,
                                    config.center_groups));
      labels.push_back(clouds[i].label.value_or(-1));
      ids.push_back(i);
    }
    split.batches.push_back(make_model_input(grouped, labels, ids));
  }
  return split;
}

bool uses_channel(TrainingStage stage, const ChannelSpec& spec) {
  return !(stage == TrainingStage::kStage1 && spec.noiseless());
}

EvalResult evaluate(Model& model, const PreparedSplit& split, const ChannelSpec& spec, bool use_channel) {
  spec.validate();
  NoGradGuard no_grad;
  EvalResult result;
  const auto start = Clock::now();
  for (const auto& batch : split.batches) {
    for (int label : batch.labels)
      if (label < 0 || static_cast<std::size_t>(label) >= model.config().num_classes)
        throw ConfigError("evaluate: label " + std::to_string(label) + " outside the model's " +
                          std::to_string(model.config().num_classes) + " classes");
    ForwardOptions options;
    options.use_channel = use_channel;
    options.channel = spec;
    const ForwardOutput out = model.forward(batch, options);
    const std::size_t classes = out.logits.dim(1);
    for (std::size_t b = 0; b < batch.labels.size(); ++b) {
      const auto row = out.logits.data().subspan(b * classes, classes);
      const int pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      result.predictions.push_back(pred);
      result.n_correct += pred == batch.labels[b] ? 1 : 0;
      ++result.n_total;
    }
  }
  result.seconds = seconds_since(start);
  return result;
}

SweepResult snr_sweep(Model& model, TrainingStage stage, const PreparedSplit& split, std::span<const double> snrs,
                      std::uint64_t seed, std::string checkpoint_id) {
  std::vector<double> sorted(snrs.begin(), snrs.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ArgumentError("snr_sweep: duplicate SNR values");
  SweepResult sweep;
  sweep.checkpoint_id = std::move(checkpoint_id);
  sweep.seed = seed;
  for (double snr : sorted) {
    const ChannelSpec spec = ChannelSpec::awgn(snr, derive_seed(seed, {std::bit_cast<std::uint64_t>(snr)}));
    const EvalResult r = evaluate(model, split, spec, uses_channel(stage, spec));
    sweep.rows.push_back({snr, r.n_correct, r.n_total, r.n_total ? r.seconds / static_cast<double>(r.n_total) : 0.0});
  }
  return sweep;
}

double SweepResult::mean_accuracy() const {
  if (rows.empty()) return 0.0;
  double total = 0;
  for (const auto& r : rows) total += r.accuracy();
  return total / static_cast<double>(rows.size());
}

std::string SweepResult::to_csv() const {
  std::ostringstream out;
  out << "# checkpoint=" << checkpoint_id << "\n";
  out << "# channel=" << channel_kind_name(channel) << "\n";
  out << "# seed=" << seed << "\n";
  out << "snr_db,accuracy,n_correct,n_total,latency_s\n";
  for (const auto& r : rows)
    out << format_snr(r.snr_db) << ',' << format_real(r.accuracy()) << ',' << r.n_correct << ',' << r.n_total << ','
        << format_real(r.latency_seconds) << '\n';
  return out.str();
}

SweepResult SweepResult::from_csv(std::string_view text) {
  SweepResult sweep;
  std::size_t line_no = 0;
  bool header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string_view key = line.substr(1, eq - 1), value = line.substr(eq + 1);
      if (key == " checkpoint") sweep.checkpoint_id = std::string(value);
      if (key == " channel") sweep.channel = parse_channel_kind(std::string(value));
      if (key == " seed") sweep.seed = parse_u64(value, line_no);
      continue;
    }
    if (!header) {
      if (line != "snr_db,accuracy,n_correct,n_total,latency_s") throw ParseError(line_no, "not a sweep CSV header");
      header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw ParseError(line_no, "expected 5 columns");
    SweepRow row;
    try {
      row.snr_db = parse_snr(cells[0]);
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
    row.n_correct = parse_u64(cells[2], line_no);
    row.n_total = parse_u64(cells[3], line_no);
    row.latency_seconds = parse_double(cells[4], line_no);
    if (row.n_correct > row.n_total) throw ParseError(line_no, "n_correct exceeds n_total");
    if (parse_double(cells[1], line_no) != row.accuracy())
      throw ParseError(line_no, "accuracy disagrees with n_correct / n_total");
    if (!sweep.rows.empty() && !(row.snr_db > sweep.rows.back().snr_db))
      throw ParseError(line_no, "SNR rows must strictly increase");
    sweep.rows.push_back(row);
  }
  if (!header) throw ParseError(line_no, "missing sweep CSV header");
  return sweep;
}

double compression_ratio(const ModelConfig& config) {
  return static_cast<double>(config.num_tokens() * config.channel_dim) / static_cast<double>(config.n_points * 3);
}

LatencyReport bench_latency(Model& model, TrainingStage stage, std::span<const PointCloud> clouds,
                            const ChannelSpec& spec, std::size_t repetitions, std::size_t batch_size) {
  if (repetitions < 3) throw ArgumentError("bench_latency: at least 3 repetitions required");
  LatencyReport report;
  report.clouds = clouds.size();
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    const auto start = Clock::now();
    if (!clouds.empty()) {
      const PreparedSplit split = prepare_split(clouds, model.config(), batch_size);
      evaluate(model, split, spec, uses_channel(stage, spec));
    }
    report.run_seconds.push_back(clouds.empty() ? 0.0 : seconds_since(start));
  }
  std::vector<double> sorted = report.run_seconds;
  std::sort(sorted.begin(), sorted.end());
  report.min_seconds = sorted.front();
  report.median_seconds = sorted[sorted.size() / 2];
  report.per_cloud_seconds = clouds.empty() ? 0.0 : report.median_seconds / static_cast<double>(clouds.size());
  return report;
}

PCSC_END_NAMESPACE
