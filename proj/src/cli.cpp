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

#include "pcsc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <boost/algorithm/string.hpp>

#include "pcsc/evaluation.hpp"
#include "pcsc/run_config.hpp"
#include "pcsc/training.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

namespace fs = std::filesystem;

struct DatasetPreset {
  int classes;
  std::size_t train, test, points;
};

DatasetPreset dataset_preset(const std::string& name) {
  if (name == "desk") return {kNumShapeClasses, 512, 128, 256};
  if (name == "tiny") return {3, 24, 12, 24};
  if (name == "paper")
    throw ConfigError("the paper preset expects ModelNet40; use `dataset import` on an OFF tree");
  throw ConfigError("unknown dataset preset '" + name + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, text);
}

// Flags shared by the subcommands. Values left unset fall back to the run
// config file (--config) and then to built-in defaults.
struct Options {
  std::uint64_t seed = 1;
  std::string config_path;

  std::string data_dir;
  std::string out;
  std::string preset;
  std::optional<int> classes;
  std::optional<std::size_t> train_count, test_count, points;
  std::optional<double> jitter;
  std::string import_root;

  int stage = 0;
  std::string from;
  std::optional<std::size_t> epochs, batch_size, restart_period;
  std::optional<double> lr, mse_weight;
  bool freeze_trunk = false;
  bool no_augment = false;
  std::string report_path;

  std::string checkpoint;
  bool sweep = false;
  std::string snrs;
  std::string snr = "inf";
  std::size_t reps = 3;
  bool no_pretrain = false;

  std::vector<std::string> inputs;
  std::string baseline;
};

RunConfig base_config(const Options& o) {
  RunConfig rc = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  rc.train.seed = o.seed;
  if (!o.preset.empty()) {
    const ModelConfig preset = ModelConfig::from_preset(o.preset);
    rc.model = preset;
  }
  if (o.epochs) rc.train.epochs = rc.stage2_epochs = *o.epochs;
  if (o.batch_size) rc.train.batch_size = *o.batch_size;
  if (o.restart_period) rc.train.schedule.initial_period = *o.restart_period;
  if (o.lr) rc.train.base_lr = *o.lr;
  if (o.mse_weight) rc.train.mse_weight = *o.mse_weight;
  if (o.freeze_trunk) rc.train.freeze_encoder_trunk = true;
  if (o.no_augment) rc.train.augment = false;
  if (!o.snrs.empty()) rc.sweep_snrs = parse_snr_list(o.snrs);
  rc.train.validate();
  return rc;
}

Dataset open_dataset(const Options& o, const RunConfig& rc) {
  if (!o.data_dir.empty()) return load_dataset(o.data_dir);
  if (rc.dataset_dir) return load_dataset(*rc.dataset_dir);
  throw ConfigError("no dataset given: pass --data or set [dataset] dir");
}

void print_epochs(std::ostream& out, const TrainReport& report) {
  for (const auto& e : report.epochs) {
    out << "epoch " << e.epoch << " lr " << format_real(e.lr) << " loss " << format_real(e.loss) << " acc "
        << format_real(e.train_accuracy);
    for (const auto& p : e.probes) out << " acc@" << format_snr(p.snr_db) << " " << format_real(p.accuracy);
    out << '\n';
  }
}

void finish_training(std::ostream& out, TrainResult& result, const Options& o) {
  result.checkpoint.save(o.out);
  result.report.checkpoint = fs::path(o.out).filename().string();
  if (!o.report_path.empty()) write_text(o.report_path, result.report.to_csv());
  print_epochs(out, result.report);
  out << result.report.summary() << '\n';
}

int run_dataset_gen(const Options& o, std::ostream& out) {
  RunConfig rc = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  SyntheticConfig sc = rc.synthetic;
  if (!o.preset.empty()) {
    const DatasetPreset p = dataset_preset(o.preset);
    sc.num_classes = p.classes;
    sc.num_train = p.train;
    sc.num_test = p.test;
    sc.points_per_cloud = p.points;
  }
  sc.seed = o.seed;
  if (o.classes) sc.num_classes = *o.classes;
  if (o.train_count) sc.num_train = *o.train_count;
  if (o.test_count) sc.num_test = *o.test_count;
  if (o.points) sc.points_per_cloud = *o.points;
  if (o.jitter) sc.jitter_sigma = *o.jitter;
  const Dataset ds = generate_dataset(sc);
  write_dataset(ds, o.out);
  out << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test clouds (" << sc.num_classes
      << " classes, " << sc.points_per_cloud << " points) to " << o.out << '\n';
  return 0;
}

int run_dataset_import(const Options& o, std::ostream& out) {
  const Dataset ds = import_off_tree(o.import_root, o.points.value_or(1024), o.seed);
  write_dataset(ds, o.out);
  out << "imported " << ds.train.size() << " train / " << ds.test.size() << " test clouds ("
      << ds.manifest.num_classes << " classes) to " << o.out << '\n';
  return 0;
}

int run_dataset_inspect(const Options& o, std::ostream& out) {
  const Dataset ds = load_dataset(o.data_dir);
  const auto& m = ds.manifest;
  out << "classes " << m.num_classes << ", points per cloud " << m.points_per_cloud << ", seed " << m.seed
      << ", jitter " << format_real(m.jitter_sigma) << '\n';
  out << "class,name,train,test\n";
  std::vector<std::size_t> train(m.num_classes), test(m.num_classes);
  for (const auto& c : ds.train) ++train[static_cast<std::size_t>(*c.label)];
  for (const auto& c : ds.test) ++test[static_cast<std::size_t>(*c.label)];
  for (int i = 0; i < m.num_classes; ++i)
    out << i << ',' << m.class_names[i] << ',' << train[i] << ',' << test[i] << '\n';
  out << "total,," << ds.train.size() << ',' << ds.test.size() << '\n';
  return 0;
}

int run_train(const Options& o, std::ostream& out) {
  const RunConfig rc = base_config(o);
  const Dataset ds = open_dataset(o, rc);
  TrainConfig tc = rc.train;
  if (o.stage == 1) {
    tc.stage = TrainingStage::kStage1;
    Model model(rc.model, o.seed);
    TrainResult result = stage1_train(ds, model, tc);
    finish_training(out, result, o);
    return 0;
  }
  if (o.from.empty()) throw ConfigError("train --stage 2 needs --from <stage-1 checkpoint>");
  tc.stage = TrainingStage::kStage2;
  tc.epochs = rc.stage2_epochs;
  if (tc.probe_snrs.empty()) tc.probe_snrs = {4.0, 20.0};
  TrainResult result = stage2_train(ds, Checkpoint::load(o.from), tc);
  finish_training(out, result, o);
  return 0;
}

int run_ablate(const Options& o, std::ostream& out) {
  if (!o.no_pretrain) throw ArgumentError("ablate: only --no-pretrain is supported");
  const RunConfig rc = base_config(o);
  const Dataset ds = open_dataset(o, rc);
  TrainConfig tc = rc.train;
  tc.stage = TrainingStage::kJoint;
  // same budget as both stages together
  if (!o.epochs) tc.epochs = rc.train.epochs + rc.stage2_epochs;
  Model model(rc.model, o.seed);
  TrainResult result = joint_train(ds, model, tc);
  finish_training(out, result, o);
  return 0;
}

int run_eval(const Options& o, std::ostream& out) {
  const RunConfig rc = base_config(o);
  const Dataset ds = open_dataset(o, rc);
  const Checkpoint ckpt = Checkpoint::load(o.checkpoint);
  Model model = ckpt.restore();
  if (static_cast<std::size_t>(ds.manifest.num_classes) != model.config().num_classes)
    throw ConfigError("checkpoint has " + std::to_string(model.config().num_classes) + " classes, dataset has " +
                      std::to_string(ds.manifest.num_classes));
  const PreparedSplit split = prepare_split(ds.test, model.config(), rc.eval_batch_size);
  if (o.sweep) {
    const SweepResult sweep = snr_sweep(model, ckpt.stage, split, rc.sweep_snrs, o.seed,
                                        fs::path(o.checkpoint).filename().string());
    const std::string csv = sweep.to_csv();
    if (!o.out.empty()) write_text(o.out, csv);
    out << csv;
    return 0;
  }
  ChannelSpec spec = rc.channel;
  spec.snr_db = parse_snr(o.snr);
  spec.seed = o.seed;
  const EvalResult r = evaluate(model, split, spec, uses_channel(ckpt.stage, spec));
  out << "accuracy " << format_real(r.accuracy()) << " (" << r.n_correct << '/' << r.n_total << ") at "
      << format_snr(spec.snr_db) << " dB, " << format_real(r.seconds) << " s\n";
  if (!o.out.empty()) {
    SweepResult row;
    row.checkpoint_id = fs::path(o.checkpoint).filename().string();
    row.channel = spec.kind;
    row.seed = o.seed;
    row.rows.push_back({spec.snr_db, r.n_correct, r.n_total,
                        r.n_total ? r.seconds / static_cast<double>(r.n_total) : 0.0});
    write_text(o.out, row.to_csv());
  }
  return 0;
}

int run_bench(const Options& o, std::ostream& out) {
  const RunConfig rc = base_config(o);
  const Dataset ds = open_dataset(o, rc);
  const Checkpoint ckpt = Checkpoint::load(o.checkpoint);
  Model model = ckpt.restore();
  ChannelSpec spec = rc.channel;
  spec.snr_db = parse_snr(o.snr);
  spec.seed = o.seed;
  const LatencyReport r = bench_latency(model, ckpt.stage, ds.test, spec, o.reps, rc.eval_batch_size);
  std::ostringstream csv;
  csv << "clouds,repetitions,min_s,median_s,per_cloud_s\n"
      << r.clouds << ',' << r.run_seconds.size() << ',' << format_real(r.min_seconds) << ','
      << format_real(r.median_seconds) << ',' << format_real(r.per_cloud_seconds) << '\n';
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << csv.str();
  out << "compression ratio " << format_real(compression_ratio(model.config())) << '\n';
  return 0;
}

// A CSV the `report` subcommand understands, reduced to named series of
// (snr, accuracy) points plus free-form summary lines.
struct ReportInput {
  std::map<std::string, std::map<double, double>> series;
  std::vector<std::string> order;  // series names by first appearance
  std::vector<std::string> notes;

  std::map<double, double>& points(const std::string& name) {
    if (!series.contains(name)) order.push_back(name);
    return series[name];
  }
};

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  boost::algorithm::split(cells, line, boost::algorithm::is_any_of(","));
  return cells;
}

double parse_number(const std::string& cell, const std::string& where) {
  try {
    return parse_snr(boost::algorithm::trim_copy(cell));
  } catch (const Error&) {
    throw FormatError(where + ": bad number '" + cell + "'");
  }
}

void ingest_csv(const fs::path& path, ReportInput& report) {
  const std::string text = read_file(path);
  const std::string name = path.stem().string();
  const auto lines = csv_lines(text);
  if (lines.empty()) throw FormatError(path.string() + ": empty CSV");
  const auto header = split_csv(lines[0]);
  if (lines[0].starts_with("snr_db,accuracy,n_correct")) {
    const SweepResult sweep = SweepResult::from_csv(text);
    for (const auto& row : sweep.rows) report.points(name)[row.snr_db] = row.accuracy();
    report.notes.push_back(name + ": sweep, mean accuracy " + format_real(sweep.mean_accuracy()));
  } else if (lines[0].starts_with("epoch,stage,")) {
    if (lines.size() < 2) throw FormatError(path.string() + ": training report has no epochs");
    const auto last = split_csv(lines.back());
    if (last.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    std::string note = name + ": " + last[1] + ", " + std::to_string(lines.size() - 1) + " epochs";
    for (std::size_t i = 4; i + 1 < header.size(); ++i)
      if (!last[i].empty()) note += ", " + header[i] + " " + format_real(parse_number(last[i], path.string()));
    report.notes.push_back(note);
  } else if (lines[0].starts_with("clouds,")) {
    if (lines.size() != 2) throw FormatError(path.string() + ": expected one benchmark row");
    const auto row = split_csv(lines[1]);
    if (row.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    report.notes.push_back(name + ": " + row[0] + " clouds, median " + row[3] + " s, per cloud " + row[4] + " s");
  } else if (header.size() >= 2 && header[0] == "snr_db") {
    // Merged tables and external baselines: one accuracy column per series.
    for (std::size_t l = 1; l < lines.size(); ++l) {
      const auto row = split_csv(lines[l]);
      if (row.size() != header.size()) throw FormatError(path.string() + ": ragged row");
      const double snr = parse_number(row[0], path.string());
      for (std::size_t c = 1; c < header.size(); ++c)
        if (!boost::algorithm::trim_copy(row[c]).empty())
          report.points(header[c])[snr] = parse_number(row[c], path.string());
    }
  } else {
    throw FormatError(path.string() + ": unrecognized CSV header '" + lines[0] + "'");
  }
}

int run_report(const Options& o, std::ostream& out) {
  ReportInput report;
  std::vector<fs::path> paths(o.inputs.begin(), o.inputs.end());
  if (!o.baseline.empty()) paths.emplace_back(o.baseline);
  for (const auto& p : paths) ingest_csv(p, report);

  std::ostringstream table;
  table << "# pcsc report\n";
  for (const auto& note : report.notes) table << "# " << note << '\n';
  if (!report.series.empty()) {
    std::vector<double> snrs;
    for (const auto& [name, points] : report.series)
      for (const auto& [snr, acc] : points) snrs.push_back(snr);
    std::sort(snrs.begin(), snrs.end());
    snrs.erase(std::unique(snrs.begin(), snrs.end()), snrs.end());
    table << "snr_db";
    for (const auto& name : report.order) table << ',' << name;
    table << '\n';
    for (double snr : snrs) {
      table << format_snr(snr);
      for (const auto& name : report.order) {
        const auto& points = report.series.at(name);
        table << ',';
        if (const auto it = points.find(snr); it != points.end()) table << format_real(it->second);
      }
      table << '\n';
    }
  }
  if (!o.out.empty()) write_text(o.out, table.str());
  out << table.str();
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud semantic communication simulator", "pcsc"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--config", o.config_path, "Run config file (INI)");

  auto* dataset = app.add_subcommand("dataset", "Generate, import or inspect datasets");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate the synthetic shape dataset");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--preset", o.preset, "desk or tiny");
  gen->add_option("--classes", o.classes);
  gen->add_option("--train", o.train_count);
  gen->add_option("--test", o.test_count);
  gen->add_option("--points", o.points);
  gen->add_option("--jitter", o.jitter);
  auto* import = dataset->add_subcommand("import", "Import a ModelNet-style OFF tree");
  import->add_option("--root", o.import_root, "Directory holding <class>/{train,test}/*.off")->required();
  import->add_option("--out", o.out, "Output directory")->required();
  import->add_option("--points", o.points, "Points sampled per mesh");
  auto* inspect = dataset->add_subcommand("inspect", "Print per-class split sizes");
  inspect->add_option("dir", o.data_dir)->required();

  auto add_training_flags = [&](CLI::App* cmd) {
    cmd->add_option("--data", o.data_dir, "Dataset directory");
    cmd->add_option("--out", o.out, "Checkpoint to write")->required();
    cmd->add_option("--preset", o.preset, "Model preset: desk, paper or tiny");
    cmd->add_option("--epochs", o.epochs, "Epochs (defaults: stage 1 60, stage 2 40, ablation their sum)");
    cmd->add_option("--batch-size", o.batch_size);
    cmd->add_option("--lr", o.lr, "Base learning rate");
    cmd->add_option("--restart-period", o.restart_period, "Epochs in the first cosine cycle");
    cmd->add_option("--mse-weight", o.mse_weight);
    cmd->add_flag("--no-augment", o.no_augment);
    cmd->add_option("--report", o.report_path, "Per-epoch CSV");
  };
  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", o.stage)->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--from", o.from, "Stage-1 checkpoint (stage 2)");
  train->add_flag("--freeze-trunk", o.freeze_trunk, "Also freeze the sub-cloud convolutions in stage 2");
  add_training_flags(train);

  auto* ablate = app.add_subcommand("ablate", "Ablation runs");
  ablate->add_flag("--no-pretrain", o.no_pretrain, "Train everything jointly under noise from scratch")->required();
  add_training_flags(ablate);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--data", o.data_dir);
  eval->add_flag("--snr-sweep", o.sweep, "Sweep the SNR list instead of a single point");
  eval->add_option("--snrs", o.snrs, "Comma-separated dB values");
  eval->add_option("--snr", o.snr, "Single-point SNR in dB, or inf")->capture_default_str();
  eval->add_option("--out", o.out, "Sweep-format CSV to write");

  auto* bench = app.add_subcommand("bench", "Time test-split inference");
  bench->add_option("--checkpoint", o.checkpoint)->required();
  bench->add_option("--data", o.data_dir);
  bench->add_option("--snr", o.snr)->capture_default_str();
  bench->add_option("--reps", o.reps)->check(CLI::Range(3, 1000))->capture_default_str();
  bench->add_option("--out", o.out, "CSV to write");

  auto* report = app.add_subcommand("report", "Merge CSV outputs into one table");
  report->add_option("inputs", o.inputs, "CSV files")->required();
  report->add_option("--baseline", o.baseline, "External baseline CSV (snr_db,<name>...)");
  report->add_option("--out", o.out, "CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (*gen) return run_dataset_gen(o, out);
    if (*import) return run_dataset_import(o, out);
    if (*inspect) return run_dataset_inspect(o, out);
    if (*train) return run_train(o, out);
    if (*ablate) return run_ablate(o, out);
    if (*eval) return run_eval(o, out);
    if (*bench) return run_bench(o, out);
    if (*report) return run_report(o, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

PCSC_END_NAMESPACE
