#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cef/aggregation.hpp"
#include "cef/checkpoint.hpp"
#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/metrics.hpp"
#include "cef/model.hpp"
#include "cef/predictions.hpp"
#include "cef/synth.hpp"
#include "cef/trainer.hpp"

// Command-line front end. Each command validates all of its inputs before it
// writes anything. Exit codes: 0 success, 2 usage, 3 data/validation,
// 4 numeric failure.

namespace cef::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

namespace fs = std::filesystem;

/// Everything a command may need, as parsed from flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool balanced = false;

  fs::path train_manifest, val_manifest, manifest;
  fs::path out_dir, out;
  fs::path checkpoint;
  std::vector<fs::path> predictions;

  std::string method;
  std::string level = "frame";
  std::size_t window = 10;
  std::string labels;  // comma-separated class names

  std::size_t videos = 24, val_videos = 0, frames = 16;
  double separation = 8.0;

  std::vector<std::string> class_names(std::size_t classes) const {
    if (labels.empty()) return default_class_names(classes);
    std::vector<std::string> names;
    std::stringstream ss(labels);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
    if (names.size() != classes)
      throw UsageError("--labels lists " + std::to_string(names.size()) + " names for " +
                       std::to_string(classes) + " classes");
    return names;
  }
};

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline int cmd_train(const RunConfig& rc, std::ostream& log) {
  require_file(rc.train_manifest, "train manifest");
  if (!rc.val_manifest.empty()) require_file(rc.val_manifest, "validation manifest");
  const auto train_set = load_manifest(rc.train_manifest, std::nullopt, rc.model.dims);
  std::vector<ModalityBundle> val_set;
  if (!rc.val_manifest.empty()) val_set = load_manifest(rc.val_manifest, std::nullopt, rc.model.dims);

  TrainConfig tc = rc.train;
  if (rc.balanced) tc.class_weights = inverse_frequency_weights(train_set, rc.model.classes);
  auto result = train(train_set, val_set, rc.model, tc, [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %4zu  loss %.5f  train_acc %.4f  val_macro_f1 %s\n",
                  e.epoch, e.mean_loss, e.train_accuracy,
                  e.val_macro_f1 ? std::to_string(*e.val_macro_f1).c_str() : "-");
    log << buf;
  });

  ensure_dir(rc.out_dir);
  save_checkpoint(result.params, rc.out_dir / "model.ckpt");
  bin::write_file(rc.out_dir / "train_log.tsv", format_train_log(result.log));
  bin::write_file(rc.out_dir / "timing.tsv", format_timing(result.log));
  log << "best epoch " << result.log.best_epoch << ", wrote " << (rc.out_dir / "model.ckpt").string()
      << "\n";
  return kExitOk;
}

inline int cmd_predict(const RunConfig& rc, std::ostream& log) {
  require_file(rc.checkpoint, "checkpoint");
  require_file(rc.manifest, "manifest");
  const auto params = load_checkpoint(rc.checkpoint);
  const auto data = load_manifest(rc.manifest, std::nullopt, params.config.dims);
  std::vector<FramePredictions> preds;
  preds.reserve(data.size());
  for (const auto& b : data) preds.push_back(predict(b, params));
  write_predictions(preds, rc.out);
  std::size_t rows = 0;
  for (const auto& p : preds) rows += p.frames();
  log << "wrote " << rows << " frame predictions for " << preds.size() << " videos to "
      << rc.out.string() << "\n";
  return kExitOk;
}

inline int cmd_aggregate(const RunConfig& rc, std::ostream& log) {
  const auto method = parse_method(rc.method);
  require_file(rc.predictions.at(0), "predictions");
  const auto preds = read_predictions(rc.predictions.at(0));
  std::vector<std::pair<std::string, int>> labels;
  for (const auto& p : preds) labels.emplace_back(p.video_id, aggregate(p, method));
  write_video_labels(labels, rc.out);
  log << "aggregated " << labels.size() << " videos with " << method_title(method) << "\n";
  return kExitOk;
}

inline int cmd_ensemble(const RunConfig& rc, std::ostream& log) {
  if (rc.predictions.empty()) throw UsageError("ensemble needs at least one --predictions file");
  if (rc.window < 1) throw UsageError("--window must be >= 1");
  std::vector<std::vector<FramePredictions>> models;
  for (const auto& p : rc.predictions) {
    require_file(p, "predictions");
    models.push_back(read_predictions(p));
  }
  const auto& ref = models.front();
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (models[m].size() != ref.size())
      throw CoverageError(rc.predictions[m].string() + " covers " + std::to_string(models[m].size()) +
                          " videos, " + rc.predictions[0].string() + " covers " +
                          std::to_string(ref.size()));
    for (std::size_t v = 0; v < ref.size(); ++v) {
      if (models[m][v].video_id != ref[v].video_id || models[m][v].frames() != ref[v].frames())
        throw CoverageError(rc.predictions[m].string() + ": video " + models[m][v].video_id +
                            " (" + std::to_string(models[m][v].frames()) + " frames) does not match " +
                            ref[v].video_id + " (" + std::to_string(ref[v].frames()) + " frames)");
    }
  }
  std::vector<std::pair<std::string, std::vector<int>>> fused;
  for (std::size_t v = 0; v < ref.size(); ++v) {
    std::vector<std::vector<int>> per_model;
    for (const auto& model : models) per_model.push_back(model[v].labels);
    fused.emplace_back(ref[v].video_id, sliding_window_ensemble(per_model, rc.window));
  }
  write_frame_label_table(fused, rc.out);
  log << "fused " << models.size() << " models over " << fused.size() << " videos (window "
      << rc.window << ")\n";
  return kExitOk;
}

inline int cmd_evaluate(const RunConfig& rc, std::ostream& log) {
  const auto level = parse_level(rc.level);
  std::vector<std::optional<AggregationMethod>> methods;
  const std::string method = rc.method.empty() ? (level == EvalLevel::video ? "vote" : "frame")
                                               : rc.method;
  if (method == "all") {
    for (auto m : kAllMethods) methods.emplace_back(m);
  } else if (method == "frame") {
    if (level == EvalLevel::video)
      throw UsageError("--method frame is only meaningful with --level frame");
    methods.emplace_back(std::nullopt);
  } else {
    methods.emplace_back(parse_method(method));
  }
  require_file(rc.predictions.at(0), "predictions");
  require_file(rc.manifest, "manifest");
  const auto preds = read_predictions(rc.predictions.at(0));
  const auto gold = load_gold(rc.manifest);
  if (preds.empty() && !gold.empty()) throw CoverageError("prediction file is empty");
  const std::size_t classes = preds.empty() ? 0 : preds.front().classes;
  const auto names = rc.class_names(classes);

  std::vector<MetricsReport> reports;
  for (const auto& m : methods) reports.push_back(evaluate(preds, gold, classes, level, m));
  const auto table = format_report_table(reports, names);
  bin::write_file(rc.out, table);
  bin::write_file(fs::path(rc.out.string() + ".kv"), format_report_kv(reports));
  log << table;
  return kExitOk;
}

inline int cmd_synth(const RunConfig& rc, std::ostream& log) {
  SynthConfig sc;
  sc.seed = rc.train.seed;
  sc.videos = rc.videos;
  sc.frames = rc.frames;
  sc.classes = rc.model.classes;
  sc.separation = rc.separation;
  sc.dims = rc.model.dims;
  sc.split = "train";
  const auto train_set = synth_dataset(sc);
  std::vector<ModalityBundle> val_set;
  if (rc.val_videos > 0) {
    sc.split = "val";
    sc.videos = rc.val_videos;
    val_set = synth_dataset(sc);
  }

  ensure_dir(rc.out_dir);
  auto train_entries = write_dataset_files(train_set, rc.out_dir, "train", sc.dims);
  auto val_entries = write_dataset_files(val_set, rc.out_dir, "val", sc.dims);
  write_manifest(train_entries, rc.out_dir / "train.tsv");
  if (!val_entries.empty()) write_manifest(val_entries, rc.out_dir / "val.tsv");
  auto all = train_entries;
  all.insert(all.end(), val_entries.begin(), val_entries.end());
  write_manifest(all, rc.out_dir / "manifest.tsv");
  log << "wrote " << all.size() << " synthetic videos (" << 4 * all.size() << " feature files) to "
      << rc.out_dir.string() << "\n";
  return kExitOk;
}

inline int exit_code_for(const Error& e) {
  switch (e.category()) {
    case Error::Category::usage: return kExitUsage;
    case Error::Category::numeric: return kExitNumeric;
    case Error::Category::data:
    case Error::Category::contract: return kExitData;
  }
  return kExitData;
}

/// Parses `args` (args[0] is the program name) and runs the chosen command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig rc;
  CLI::App app{"Multimodal compound-expression recognition: train, predict, aggregate, "
               "ensemble, evaluate"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  train->add_option("--train-manifest", rc.train_manifest, "Training manifest")->required();
  train->add_option("--val-manifest", rc.val_manifest, "Validation manifest");
  train->add_option("--out-dir", rc.out_dir, "Output directory")->required();
  train->add_option("--epochs", rc.train.epochs, "Maximum epochs")->capture_default_str();
  train->add_option("--lr", rc.train.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--seed", rc.train.seed, "Seed for init, shuffling and dropout")
      ->capture_default_str();
  train->add_option("--k", rc.model.classes, "Number of classes")->capture_default_str();
  train->add_option("--d-model", rc.model.d_model, "Common embedding width")->capture_default_str();
  train->add_option("--window", rc.model.window, "Co-attention context radius")
      ->capture_default_str();
  train->add_option("--patience", rc.train.patience, "Early-stopping patience")
      ->capture_default_str();
  train->add_flag("--balanced", rc.balanced, "Inverse-frequency class weights");

  auto* predict_cmd = app.add_subcommand("predict", "Write per-frame predictions");
  predict_cmd->add_option("--checkpoint", rc.checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--manifest", rc.manifest, "Manifest of videos")->required();
  predict_cmd->add_option("--out", rc.out, "Prediction file")->required();

  auto* aggregate_cmd = app.add_subcommand("aggregate", "Reduce frame predictions to video labels");
  aggregate_cmd->add_option("--predictions", rc.predictions, "Prediction file")
      ->required()
      ->expected(1);
  aggregate_cmd->add_option("--method", rc.method, "vote | logits | probs")->required();
  aggregate_cmd->add_option("--out", rc.out, "Video label file")->required();

  auto* ensemble_cmd = app.add_subcommand("ensemble", "Sliding-window cross-model frame ensemble");
  ensemble_cmd->add_option("--predictions", rc.predictions, "Prediction file (repeatable)")
      ->required()
      ->take_all();
  ensemble_cmd->add_option("--window", rc.window, "Trailing window length")->capture_default_str();
  ensemble_cmd->add_option("--out", rc.out, "Frame label file")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against a manifest");
  evaluate_cmd->add_option("--predictions", rc.predictions, "Prediction file")
      ->required()
      ->expected(1);
  evaluate_cmd->add_option("--manifest", rc.manifest, "Gold manifest")->required();
  evaluate_cmd->add_option("--level", rc.level, "frame | video")->capture_default_str();
  evaluate_cmd->add_option("--method", rc.method, "frame | vote | logits | probs | all");
  evaluate_cmd->add_option("--out", rc.out, "Report path (key-value copy at <out>.kv)")
      ->required();
  evaluate_cmd->add_option("--labels", rc.labels, "Comma-separated class names");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out-dir", rc.out_dir, "Output directory")->required();
  synth_cmd->add_option("--videos", rc.videos, "Training videos")->capture_default_str();
  synth_cmd->add_option("--val-videos", rc.val_videos, "Validation videos")->capture_default_str();
  synth_cmd->add_option("--frames", rc.frames, "Frames per video")->capture_default_str();
  synth_cmd->add_option("--k", rc.model.classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--separation", rc.separation, "Class prototype norm")
      ->capture_default_str();
  synth_cmd->add_option("--seed", rc.train.seed, "Seed")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(rc, out);
    if (*predict_cmd) return cmd_predict(rc, out);
    if (*aggregate_cmd) return cmd_aggregate(rc, out);
    if (*ensemble_cmd) return cmd_ensemble(rc, out);
    if (*evaluate_cmd) return cmd_evaluate(rc, out);
    if (*synth_cmd) return cmd_synth(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cef::cli
