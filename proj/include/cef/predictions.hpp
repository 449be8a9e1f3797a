#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cef/binary_io.hpp"
#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/ops.hpp"

namespace cef {

/// Per-frame model outputs for one video.
struct FramePredictions {
  std::string video_id;
  std::size_t classes = 0;
  std::vector<float> logits;  // frames x classes
  std::vector<float> probs;   // frames x classes
  std::vector<int> labels;    // argmax of logits, lowest index on ties

  std::size_t frames() const { return labels.size(); }
  std::span<const float> logit_row(std::size_t t) const {
    return std::span<const float>(logits).subspan(t * classes, classes);
  }
  std::span<const float> prob_row(std::size_t t) const {
    return std::span<const float>(probs).subspan(t * classes, classes);
  }

  bool operator==(const FramePredictions&) const = default;
};

/// Builds probabilities and labels from raw logits.
inline FramePredictions make_frame_predictions(std::string video_id, std::vector<float> logits,
                                               std::size_t classes) {
  if (classes < 1 || logits.size() % classes != 0 || logits.empty()) {
    throw DimensionError("predictions for " + video_id + ": " + std::to_string(logits.size()) +
                         " logits do not form rows of " + std::to_string(classes));
  }
  const std::size_t frames = logits.size() / classes;
  Graph<float> g;
  g.set_recording(false);
  Tensor<float> x({frames, classes}, logits);
  auto p = softmax(g, x, 1);
  FramePredictions out;
  out.video_id = std::move(video_id);
  out.classes = classes;
  out.labels = argmax_rows<float>(logits, classes);
  out.probs.assign(p.data().begin(), p.data().end());
  out.logits = std::move(logits);
  return out;
}

// Prediction file: tab-separated text, one row per frame, columns
//   video_id  frame_idx  logit_0 .. logit_{K-1}  prob_0 .. prob_{K-1}  label
// preceded by a '#' header line. Rows of a video are contiguous with
// frame_idx = 0, 1, ..., T-1. Floats use the shortest representation that
// round-trips exactly.

namespace detail {

inline void append_float(std::string& out, float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline float parse_float(std::string_view s, const std::string& where) {
  float v = 0.0f;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw FormatError(where + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline std::string prediction_header(std::size_t classes) {
  std::string h = "#video_id\tframe_idx";
  for (std::size_t c = 0; c < classes; ++c) h += "\tlogit_" + std::to_string(c);
  for (std::size_t c = 0; c < classes; ++c) h += "\tprob_" + std::to_string(c);
  h += "\tlabel";
  return h;
}

inline std::string encode_predictions(const std::vector<FramePredictions>& videos) {
  if (videos.empty()) return prediction_header(0) + "\n";
  const std::size_t classes = videos.front().classes;
  std::string out = prediction_header(classes) + "\n";
  for (const auto& v : videos) {
    if (v.classes != classes)
      throw DimensionError("predictions: video " + v.video_id + " has a different class count");
    for (std::size_t t = 0; t < v.frames(); ++t) {
      out += v.video_id;
      out += '\t';
      out += std::to_string(t);
      for (float x : v.logit_row(t)) {
        out += '\t';
        detail::append_float(out, x);
      }
      for (float x : v.prob_row(t)) {
        out += '\t';
        detail::append_float(out, x);
      }
      out += '\t';
      out += std::to_string(v.labels[t]);
      out += '\n';
    }
  }
  return out;
}

inline void write_predictions(const std::vector<FramePredictions>& videos,
                              const std::filesystem::path& path) {
  bin::write_file(path, encode_predictions(videos));
}

/// Parses a prediction file, checking row structure, probability
/// normalisation (1e-5) and label/argmax consistency.
inline std::vector<FramePredictions> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<FramePredictions> videos;
  std::set<std::string> finished;
  std::size_t classes = 0;
  bool have_classes = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = detail::split_tabs(line);
    if (f.size() < 5 || (f.size() - 3) % 2 != 0)
      throw FormatError(where + ": malformed prediction row");
    const std::size_t k = (f.size() - 3) / 2;
    if (!have_classes) {
      classes = k;
      have_classes = true;
    } else if (k != classes) {
      throw FormatError(where + ": row has " + std::to_string(k) + " classes, expected " +
                        std::to_string(classes));
    }
    if (videos.empty() || videos.back().video_id != f[0]) {
      if (!videos.empty()) finished.insert(videos.back().video_id);
      if (finished.count(f[0])) throw FormatError(where + ": rows of " + f[0] + " are not contiguous");
      FramePredictions v;
      v.video_id = f[0];
      v.classes = classes;
      videos.push_back(std::move(v));
    }
    auto& v = videos.back();
    const auto idx = detail::parse_int(f[1]);
    if (!idx || static_cast<std::size_t>(*idx) != v.frames())
      throw FormatError(where + ": expected frame_idx " + std::to_string(v.frames()) + ", got " + f[1]);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) v.logits.push_back(detail::parse_float(f[2 + c], where));
    for (std::size_t c = 0; c < classes; ++c) {
      const float p = detail::parse_float(f[2 + classes + c], where);
      total += p;
      v.probs.push_back(p);
    }
    if (std::abs(total - 1.0) > 1e-5) throw FormatError(where + ": probabilities do not sum to 1");
    const auto label = detail::parse_int(f.back());
    if (!label || *label < 0 || static_cast<std::size_t>(*label) >= classes)
      throw FormatError(where + ": bad label '" + f.back() + "'");
    const auto expected = argmax_rows<float>(v.logit_row(v.frames()), classes);
    if (expected[0] != *label)
      throw FormatError(where + ": label " + f.back() + " is not the argmax of the logits");
    v.labels.push_back(static_cast<int>(*label));
  }
  return videos;
}

// Label files. Video level: "video_id<TAB>label"; frame level:
// "video_id<TAB>frame_idx<TAB>label". Both start with a '#' header.

inline void write_video_labels(const std::vector<std::pair<std::string, int>>& labels,
                               const std::filesystem::path& path) {
  std::string out = "#video_id\tlabel\n";
  for (const auto& [id, l] : labels) out += id + "\t" + std::to_string(l) + "\n";
  bin::write_file(path, out);
}

inline std::vector<std::pair<std::string, int>> read_video_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_tabs(line);
    const auto l = f.size() == 2 ? detail::parse_int(f[1]) : std::nullopt;
    if (!l) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    out.emplace_back(f[0], static_cast<int>(*l));
  }
  return out;
}

inline void write_frame_label_table(
    const std::vector<std::pair<std::string, std::vector<int>>>& videos,
    const std::filesystem::path& path) {
  std::string out = "#video_id\tframe_idx\tlabel\n";
  for (const auto& [id, labels] : videos)
    for (std::size_t t = 0; t < labels.size(); ++t)
      out += id + "\t" + std::to_string(t) + "\t" + std::to_string(labels[t]) + "\n";
  bin::write_file(path, out);
}

inline std::vector<std::pair<std::string, std::vector<int>>> read_frame_label_table(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label file " + path.string());
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) throw FormatError(where + ": malformed row");
    if (out.empty() || out.back().first != f[0]) out.emplace_back(f[0], std::vector<int>{});
    const auto idx = detail::parse_int(f[1]);
    const auto l = detail::parse_int(f[2]);
    if (!idx || !l || static_cast<std::size_t>(*idx) != out.back().second.size())
      throw FormatError(where + ": malformed row");
    out.back().second.push_back(static_cast<int>(*l));
  }
  return out;
}

}  // namespace cef
