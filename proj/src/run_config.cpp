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

#include "pcsc/run_config.hpp"

#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pcsc/evaluation.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

namespace pt = boost::property_tree;

const std::vector<std::pair<std::string, std::vector<std::string>>> kKnownKeys = {
    {"dataset", {"dir", "classes", "train", "test", "points", "seed", "jitter"}},
    {"model", {"preset", "fusion", "center_groups", "strict", "dropout"}},
    {"train",
     {"epochs", "batch_size", "base_lr", "weight_decay", "mse_weight", "restart_period", "period_multiplier",
      "lr_decay", "lr_floor", "snr_policy", "augment", "grad_clip", "freeze_trunk", "seed", "probe_snrs",
      "eval_every", "stage2_epochs"}},
    {"channel", {"kind", "snr_db", "h_re", "h_im", "seed"}},
    {"eval", {"snrs", "batch_size", "output"}},
};

template <class T>
T get(const pt::ptree& tree, const std::string& key, T fallback) {
  const auto text = tree.get_optional<std::string>(key);
  if (!text) return fallback;
  const auto value = tree.get_optional<T>(key);
  if (!value) throw ConfigError("config: bad value for '" + key + "': '" + *text + "'");
  return *value;
}

bool get_bool(const pt::ptree& tree, const std::string& key, bool fallback) {
  const auto text = tree.get_optional<std::string>(key);
  if (!text) return fallback;
  const std::string v = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(*text));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + *text + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

void check_keys(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto known = std::find_if(kKnownKeys.begin(), kKnownKeys.end(),
                                    [&](const auto& s) { return s.first == section; });
    if (known == kKnownKeys.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (std::find(known->second.begin(), known->second.end(), key) == known->second.end())
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
  }
}

}  // namespace

std::vector<double> parse_snr_list(std::string_view text) {
  std::vector<double> out;
  std::vector<std::string> parts;
  const std::string trimmed = boost::algorithm::trim_copy(std::string(text));
  if (trimmed.empty()) return out;
  boost::algorithm::split(parts, trimmed, boost::algorithm::is_any_of(","));
  for (auto& part : parts) {
    boost::algorithm::trim(part);
    try {
      out.push_back(parse_snr(part));
    } catch (const Error&) {
      throw ConfigError("bad SNR value '" + part + "'");
    }
  }
  return out;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(e.line(), "config: " + e.message());
  }
  check_keys(tree);

  RunConfig rc;
  if (const auto dir = tree.get_optional<std::string>("dataset.dir")) rc.dataset_dir = resolve(base_dir, *dir);
  rc.synthetic.num_classes = get(tree, "dataset.classes", rc.synthetic.num_classes);
  rc.synthetic.num_train = get(tree, "dataset.train", rc.synthetic.num_train);
  rc.synthetic.num_test = get(tree, "dataset.test", rc.synthetic.num_test);
  rc.synthetic.points_per_cloud = get(tree, "dataset.points", rc.synthetic.points_per_cloud);
  rc.synthetic.seed = get(tree, "dataset.seed", rc.synthetic.seed);
  rc.synthetic.jitter_sigma = get(tree, "dataset.jitter", rc.synthetic.jitter_sigma);

  rc.model = ModelConfig::from_preset(get<std::string>(tree, "model.preset", "desk"));
  const std::string fusion = get<std::string>(tree, "model.fusion", "sum");
  if (fusion == "sum") rc.model.fusion = Fusion::kSum;
  else if (fusion == "concat_project") rc.model.fusion = Fusion::kConcatProject;
  else throw ConfigError("config: unknown fusion '" + fusion + "'");
  rc.model.center_groups = get_bool(tree, "model.center_groups", rc.model.center_groups);
  rc.model.strict = get_bool(tree, "model.strict", rc.model.strict);
  rc.model.dropout = get(tree, "model.dropout", rc.model.dropout);
  if (tree.get_optional<std::string>("dataset.classes"))
    rc.model.num_classes = static_cast<std::size_t>(rc.synthetic.num_classes);
  if (tree.get_optional<std::string>("dataset.points")) rc.model.n_points = rc.synthetic.points_per_cloud;

  TrainConfig& t = rc.train;
  t.epochs = get(tree, "train.epochs", t.epochs);
  rc.stage2_epochs = get(tree, "train.stage2_epochs", rc.stage2_epochs);
  t.batch_size = get(tree, "train.batch_size", t.batch_size);
  t.base_lr = get(tree, "train.base_lr", t.base_lr);
  t.weight_decay = get(tree, "train.weight_decay", t.weight_decay);
  t.mse_weight = get(tree, "train.mse_weight", t.mse_weight);
  t.schedule.initial_period = get(tree, "train.restart_period", t.schedule.initial_period);
  t.schedule.period_multiplier = get(tree, "train.period_multiplier", t.schedule.period_multiplier);
  t.schedule.decay = get(tree, "train.lr_decay", t.schedule.decay);
  t.schedule.floor_lr = get(tree, "train.lr_floor", t.schedule.floor_lr);
  const std::string policy = get<std::string>(tree, "train.snr_policy", "per_epoch");
  if (policy == "per_epoch") t.snr_policy = SnrPolicy::kPerEpoch;
  else if (policy == "per_batch") t.snr_policy = SnrPolicy::kPerBatch;
  else throw ConfigError("config: unknown snr_policy '" + policy + "'");
  t.augment = get_bool(tree, "train.augment", t.augment);
  t.grad_clip = get(tree, "train.grad_clip", t.grad_clip);
  t.freeze_encoder_trunk = get_bool(tree, "train.freeze_trunk", t.freeze_encoder_trunk);
  t.seed = get(tree, "train.seed", t.seed);
  t.probe_snrs = parse_snr_list(get<std::string>(tree, "train.probe_snrs", ""));
  t.eval_every = get(tree, "train.eval_every", t.eval_every);

  rc.channel.kind = parse_channel_kind(get<std::string>(tree, "channel.kind", "awgn"));
  rc.channel.snr_db = parse_snr(get<std::string>(tree, "channel.snr_db", "inf"));
  rc.channel.h = {get(tree, "channel.h_re", 1.0), get(tree, "channel.h_im", 0.0)};
  rc.channel.seed = get(tree, "channel.seed", rc.channel.seed);

  const auto snrs = tree.get_optional<std::string>("eval.snrs");
  rc.sweep_snrs = snrs ? parse_snr_list(*snrs)
                       : std::vector<double>(kDefaultSweepSnrs.begin(), kDefaultSweepSnrs.end());
  rc.eval_batch_size = get(tree, "eval.batch_size", rc.eval_batch_size);
  rc.output_dir = resolve(base_dir, get<std::string>(tree, "eval.output", "."));
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  return parse_run_config(read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

void RunConfig::validate() const {
  if (dataset_dir && !std::filesystem::is_directory(*dataset_dir))
    throw ConfigError("config: dataset directory does not exist: " + dataset_dir->string());
  if (!output_dir.parent_path().empty() && !std::filesystem::is_directory(output_dir.parent_path()) &&
      !std::filesystem::is_directory(output_dir))
    throw ConfigError("config: output directory parent does not exist: " + output_dir.string());
  if (synthetic.num_classes < 1 || synthetic.num_classes > kNumShapeClasses)
    throw ConfigError("config: dataset.classes must lie in [1, " + std::to_string(kNumShapeClasses) + "]");
  model.validate();
  if (!dataset_dir && static_cast<std::size_t>(synthetic.num_classes) != model.num_classes)
    throw ConfigError("config: model expects " + std::to_string(model.num_classes) + " classes, dataset has " +
                      std::to_string(synthetic.num_classes));
  train.validate();
  channel.validate();
  if (stage2_epochs == 0) throw ConfigError("config: train.stage2_epochs must be positive");
  if (eval_batch_size == 0) throw ConfigError("config: eval.batch_size must be positive");
}

PCSC_END_NAMESPACE
