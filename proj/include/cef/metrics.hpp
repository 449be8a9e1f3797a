#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cef/aggregation.hpp"
#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/predictions.hpp"

namespace cef {

/// counts[gold * K + predicted]
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}

  std::uint64_t& at(std::size_t gold, std::size_t pred) { return counts[gold * classes + pred]; }
  std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts[gold * classes + pred]; }

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds,
                                 std::size_t classes) {
  if (preds.size() != golds.size()) {
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " gold labels");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int v : {preds[i], golds[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= classes) {
        throw LabelError("confusion: label " + std::to_string(v) + " at index " +
                         std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
      }
    }
    ++cm.at(golds[i], preds[i]);
  }
  return cm;
}

struct F1Summary {
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;  // unweighted mean over all K classes
  std::vector<std::uint64_t> support;
};

/// Per-class F1 = 2TP / (2TP + FP + FN), 0 when the denominator is 0; classes
/// absent from both gold and predictions still count in the mean.
inline F1Summary macro_f1(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes;
  F1Summary out;
  out.per_class_f1.assign(k, 0.0);
  out.support.assign(k, 0);
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    const double denom = 2.0 * tp + static_cast<double>(row - cm.at(c, c)) +
                         static_cast<double>(col - cm.at(c, c));
    out.per_class_f1[c] = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    out.support[c] = row;
  }
  double total = 0.0;
  for (double f : out.per_class_f1) total += f;
  out.macro_f1 = k ? total / static_cast<double>(k) : 0.0;
  return out;
}

/// Support-weighted mean of per-class F1.
inline double weighted_f1(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw ContractError("weighted_f1: no scored items");
  const auto s = macro_f1(cm);
  // Equal supports reduce to the plain mean; taking it directly keeps the two
  // bit-identical in that case.
  if (std::adjacent_find(s.support.begin(), s.support.end(), std::not_equal_to<>()) ==
      s.support.end())
    return s.macro_f1;
  // One division at the end, so perfect predictions give exactly 1.
  double acc = 0.0;
  for (std::size_t c = 0; c < cm.classes; ++c)
    acc += static_cast<double>(s.support[c]) * s.per_class_f1[c];
  return acc / static_cast<double>(n);
}

enum class EvalLevel { frame, video };

inline std::string_view level_name(EvalLevel l) { return l == EvalLevel::frame ? "frame" : "video"; }

inline EvalLevel parse_level(std::string_view s) {
  if (s == "frame") return EvalLevel::frame;
  if (s == "video") return EvalLevel::video;
  throw UsageError("unknown evaluation level '" + std::string(s) + "' (frame, video)");
}

struct MetricsReport {
  EvalLevel level = EvalLevel::frame;
  std::optional<AggregationMethod> method;  // none: raw per-frame labels
  ConfusionMatrix cm;
  std::vector<double> per_class_f1;
  std::vector<std::uint64_t> support;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;

  std::string method_key() const { return method ? std::string(cef::method_key(*method)) : "frame"; }
  std::string method_title() const {
    return method ? std::string(cef::method_title(*method)) : "Per-frame";
  }
};

inline MetricsReport make_report(ConfusionMatrix cm, EvalLevel level,
                                 std::optional<AggregationMethod> method) {
  MetricsReport r;
  r.level = level;
  r.method = method;
  auto s = macro_f1(cm);
  r.per_class_f1 = std::move(s.per_class_f1);
  r.support = std::move(s.support);
  r.macro_f1 = s.macro_f1;
  r.weighted_f1 = weighted_f1(cm);
  r.cm = std::move(cm);
  return r;
}

/// Scores predictions against gold labels.
///
/// Frame level without a method scores each frame's own label. With a method,
/// each video is first reduced to one label by that aggregation; video level
/// scores that label once per video, frame level repeats it on every frame.
inline MetricsReport evaluate(const std::vector<FramePredictions>& predictions,
                              const std::vector<GoldLabels>& gold, std::size_t classes,
                              EvalLevel level, std::optional<AggregationMethod> method) {
  if (level == EvalLevel::video && !method) method = AggregationMethod::vote;
  std::map<std::string, const FramePredictions*> by_id;
  for (const auto& p : predictions) by_id[p.video_id] = &p;
  std::string missing;
  for (const auto& g : gold)
    if (!by_id.count(g.video_id)) missing += (missing.empty() ? "" : ", ") + g.video_id;
  if (!missing.empty()) throw CoverageError("no predictions for gold videos: " + missing);

  std::vector<int> preds, golds;
  for (const auto& g : gold) {
    const auto& p = *by_id.at(g.video_id);
    if (p.classes != classes) {
      throw DimensionError("evaluate: predictions for " + g.video_id + " have " +
                           std::to_string(p.classes) + " classes, expected " +
                           std::to_string(classes));
    }
    if (level == EvalLevel::video) {
      preds.push_back(aggregate(p, *method));
      golds.push_back(g.label ? *g.label : majority_vote(*g.frame_labels));
      continue;
    }
    std::vector<int> frame_gold =
        g.frame_labels ? *g.frame_labels : std::vector<int>(p.frames(), *g.label);
    if (frame_gold.size() != p.frames()) {
      throw CoverageError("evaluate: video " + g.video_id + " has " +
                          std::to_string(frame_gold.size()) + " gold frames but " +
                          std::to_string(p.frames()) + " predicted frames");
    }
    golds.insert(golds.end(), frame_gold.begin(), frame_gold.end());
    if (method) {
      preds.insert(preds.end(), p.frames(), aggregate(p, *method));
    } else {
      preds.insert(preds.end(), p.labels.begin(), p.labels.end());
    }
  }
  return make_report(confusion(preds, golds, classes), level, method);
}

inline std::vector<std::string> default_class_names(std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

/// Human-readable table: '#' header, then one tab-separated row per report.
inline std::string format_report_table(const std::vector<MetricsReport>& reports,
                                       const std::vector<std::string>& class_names) {
  std::string out = "#method\tlevel\tmacro_f1\tweighted_f1";
  for (const auto& n : class_names) out += "\tf1[" + n + "]";
  out += '\n';
  char buf[32];
  for (const auto& r : reports) {
    out += r.method_title() + "\t" + std::string(level_name(r.level));
    std::snprintf(buf, sizeof buf, "\t%.6f", r.macro_f1);
    out += buf;
    std::snprintf(buf, sizeof buf, "\t%.6f", r.weighted_f1);
    out += buf;
    for (double f : r.per_class_f1) {
      std::snprintf(buf, sizeof buf, "\t%.6f", f);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Machine-readable key=value blocks, one per report, separated by a blank
/// line. Keys: level, method, macro_f1, weighted_f1, per_class_f1.<c>.
inline std::string format_report_kv(const std::vector<MetricsReport>& reports) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (i) out += '\n';
    out += "level=" + std::string(level_name(r.level)) + "\n";
    out += "method=" + r.method_key() + "\n";
    std::snprintf(buf, sizeof buf, "macro_f1=%.17g\n", r.macro_f1);
    out += buf;
    std::snprintf(buf, sizeof buf, "weighted_f1=%.17g\n", r.weighted_f1);
    out += buf;
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) {
      std::snprintf(buf, sizeof buf, "per_class_f1.%zu=%.17g\n", c, r.per_class_f1[c]);
      out += buf;
    }
  }
  return out;
}

}  // namespace cef
