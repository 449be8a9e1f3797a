#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cef/errors.hpp"
#include "cef/feature_file.hpp"

namespace cef {

/// One video's feature sequences plus its labels.
struct ModalityBundle {
  std::string video_id;
  FeatureSequence vit, resnet, audio, text;
  std::optional<int> label;
  std::optional<std::vector<int>> frame_labels;

  std::size_t frames() const { return vit.frames; }

  bool labeled() const { return label.has_value() || frame_labels.has_value(); }

  /// Per-frame training targets: explicit frame labels, else the video label
  /// repeated over every frame.
  std::vector<int> frame_targets() const {
    if (frame_labels) return *frame_labels;
    if (label) return std::vector<int>(frames(), *label);
    throw DataError("video " + video_id + " has no label");
  }

  bool operator==(const ModalityBundle&) const = default;
};

/// Nearest-neighbour map from `target` frames onto `source` frames:
/// index(t) = round(t * source / target) with halves rounded down, clamped to
/// source - 1. Exact integer arithmetic.
inline std::vector<std::size_t> nearest_frame_map(std::size_t source, std::size_t target) {
  std::vector<std::size_t> map(target);
  for (std::size_t t = 0; t < target; ++t) {
    const std::size_t num = 2 * t * source;
    const std::size_t idx = num <= target ? 0 : (num - target + 2 * target - 1) / (2 * target);
    map[t] = std::min(idx, source - 1);
  }
  return map;
}

inline FeatureSequence resample_frames(const FeatureSequence& seq, std::size_t target) {
  if (seq.frames == target) return seq;
  FeatureSequence out{seq.modality, static_cast<std::uint32_t>(target), seq.dim, {}};
  out.data.reserve(target * seq.dim);
  if (seq.frames == 1) {
    for (std::size_t t = 0; t < target; ++t) out.data.insert(out.data.end(), seq.data.begin(), seq.data.end());
    return out;
  }
  for (std::size_t src : nearest_frame_map(seq.frames, target))
    out.data.insert(out.data.end(), seq.row(src), seq.row(src) + seq.dim);
  return out;
}

/// Brings audio and text onto the visual frame axis.
inline ModalityBundle align_modalities(ModalityBundle bundle) {
  const std::string& id = bundle.video_id;
  for (const auto* s : {&bundle.vit, &bundle.resnet, &bundle.audio, &bundle.text}) {
    if (s->frames == 0) {
      throw AlignmentError("video " + id + ": " + std::string(modality_name(s->modality)) +
                           " sequence has no frames");
    }
  }
  if (bundle.vit.frames != bundle.resnet.frames) {
    throw AlignmentError("video " + id + ": vit has " + std::to_string(bundle.vit.frames) +
                         " frames but resnet has " + std::to_string(bundle.resnet.frames));
  }
  const std::size_t frames = bundle.vit.frames;
  bundle.audio = resample_frames(bundle.audio, frames);
  // A single text row is an utterance-level embedding; repeat it everywhere.
  bundle.text = resample_frames(bundle.text, frames);
  if (bundle.frame_labels && bundle.frame_labels->size() != frames) {
    throw AlignmentError("video " + id + ": " + std::to_string(bundle.frame_labels->size()) +
                         " frame labels for " + std::to_string(frames) + " frames");
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Manifests: tab-separated, one video per line, columns
//   video_id  vit_path  resnet_path  audio_path  text_path  label  split
// `label` is a class index, "-" for unlabeled, or a path to a frame-label file
// (one integer per line). Relative paths resolve against the manifest's
// directory. Blank lines and lines starting with '#' are ignored.

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path vit, resnet, audio, text;
  std::optional<int> label;
  std::optional<std::filesystem::path> frame_label_path;
  std::string split;
};

inline constexpr std::string_view kManifestHeader =
    "#video_id\tvit_path\tresnet_path\taudio_path\ttext_path\tlabel\tsplit";

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.emplace_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 7) {
      throw ManifestError(where + ": expected 7 tab-separated columns, got " +
                          std::to_string(f.size()));
    }
    if (f[0].empty()) throw ManifestError(where + ": empty video_id");
    if (!seen.insert(f[0]).second) throw ManifestError(where + ": duplicate video_id " + f[0]);
    ManifestEntry e;
    e.video_id = f[0];
    e.vit = resolve(f[1]);
    e.resnet = resolve(f[2]);
    e.audio = resolve(f[3]);
    e.text = resolve(f[4]);
    if (f[5] != "-" && !f[5].empty()) {
      if (auto v = detail::parse_int(f[5])) {
        if (*v < 0) throw ManifestError(where + ": negative label for " + e.video_id);
        e.label = static_cast<int>(*v);
      } else {
        e.frame_label_path = resolve(f[5]);
      }
    }
    e.split = f[6];
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Writes entries with paths as given (callers pass paths relative to the
/// manifest directory when they want a relocatable manifest).
inline void write_manifest(const std::vector<ManifestEntry>& entries,
                           const std::filesystem::path& path) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& e : entries) {
    os << e.video_id << '\t' << e.vit.string() << '\t' << e.resnet.string() << '\t'
       << e.audio.string() << '\t' << e.text.string() << '\t';
    if (e.label) {
      os << *e.label;
    } else if (e.frame_label_path) {
      os << e.frame_label_path->string();
    } else {
      os << '-';
    }
    os << '\t' << e.split << '\n';
  }
  bin::write_file(path, os.str());
}

inline std::vector<int> read_frame_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open frame-label file " + path.string());
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto v = detail::parse_int(line);
    if (!v || *v < 0) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad frame label '" +
                        line + "'");
    }
    labels.push_back(static_cast<int>(*v));
  }
  return labels;
}

inline void write_frame_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  std::ostringstream os;
  for (int l : labels) os << l << '\n';
  bin::write_file(path, os.str());
}

/// Reads, validates and aligns every entry (optionally only one split).
inline std::vector<ModalityBundle> load_manifest(const std::filesystem::path& path,
                                                 const std::optional<std::string>& split = {},
                                                 const ModalityDims& dims = {}) {
  std::vector<ModalityBundle> bundles;
  for (const auto& e : parse_manifest(path)) {
    if (split && e.split != *split) continue;
    std::vector<std::filesystem::path> needed{e.vit, e.resnet, e.audio, e.text};
    if (e.frame_label_path) needed.push_back(*e.frame_label_path);
    for (const auto& p : needed) {
      if (!std::filesystem::is_regular_file(p)) {
        throw ManifestError("video " + e.video_id + ": missing file " + p.string());
      }
    }
    ModalityBundle b;
    b.video_id = e.video_id;
    const std::pair<FeatureSequence*, const std::filesystem::path*> slots[] = {
        {&b.vit, &e.vit}, {&b.resnet, &e.resnet}, {&b.audio, &e.audio}, {&b.text, &e.text}};
    for (std::size_t i = 0; i < 4; ++i) {
      *slots[i].first = read_feature_file(*slots[i].second, dims);
      if (slots[i].first->modality != kModalities[i]) {
        throw FormatError("video " + e.video_id + ": " + slots[i].second->string() +
                          " holds " + std::string(modality_name(slots[i].first->modality)) +
                          " features, expected " + std::string(modality_name(kModalities[i])));
      }
    }
    b.label = e.label;
    if (e.frame_label_path) b.frame_labels = read_frame_labels(*e.frame_label_path);
    bundles.push_back(align_modalities(std::move(b)));
  }
  return bundles;
}

/// Labels only, without touching feature files (used for scoring).
struct GoldLabels {
  std::string video_id;
  std::optional<int> label;
  std::optional<std::vector<int>> frame_labels;
};

inline std::vector<GoldLabels> load_gold(const std::filesystem::path& manifest,
                                         const std::optional<std::string>& split = {}) {
  std::vector<GoldLabels> gold;
  for (const auto& e : parse_manifest(manifest)) {
    if (split && e.split != *split) continue;
    GoldLabels g{e.video_id, e.label, std::nullopt};
    if (e.frame_label_path) {
      if (!std::filesystem::is_regular_file(*e.frame_label_path))
        throw ManifestError("video " + e.video_id + ": missing file " + e.frame_label_path->string());
      g.frame_labels = read_frame_labels(*e.frame_label_path);
    }
    if (!g.label && !g.frame_labels) throw DataError("video " + e.video_id + " has no gold label");
    gold.push_back(std::move(g));
  }
  return gold;
}

}  // namespace cef
