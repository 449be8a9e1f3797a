#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/feature_file.hpp"

// Synthetic multimodal dataset for desk-scale experiments.
//
// Every (modality, class) pair gets a prototype vector of norm `separation`
// drawn from the seed alone, so several splits generated from one seed share
// their class structure. Each frame's feature is its video's prototype plus
// unit Gaussian noise. Labels within a split are a shuffled round-robin over
// the classes, so every class is represented whenever videos >= classes.

namespace cef {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t videos = 24;
  std::size_t frames = 16;
  std::size_t classes = 7;
  double separation = 8.0;
  std::string split = "train";
  ModalityDims dims;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// prototypes[m][c] is the class-c mean of modality m (index into kModalities).
inline std::vector<std::vector<std::vector<float>>> synth_prototypes(const SynthConfig& cfg) {
  auto rng = detail::seeded_stream(cfg.seed, detail::fnv1a("prototypes"), cfg.classes);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<std::vector<float>>> protos;
  for (Modality m : kModalities) {
    auto& per_class = protos.emplace_back();
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      std::vector<double> dir(cfg.dims[m]);
      double norm = 0.0;
      for (auto& v : dir) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      auto& proto = per_class.emplace_back(dir.size());
      for (std::size_t i = 0; i < dir.size(); ++i)
        proto[i] = static_cast<float>(cfg.separation * dir[i] / norm);
    }
  }
  return protos;
}

inline std::vector<ModalityBundle> synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ParameterError("synth: need at least 2 classes");
  if (cfg.frames < 1) throw ParameterError("synth: need at least 1 frame");
  if (!(cfg.separation >= 0.0) || !std::isfinite(cfg.separation))
    throw ParameterError("synth: separation must be finite and non-negative");

  const auto protos = synth_prototypes(cfg);
  const std::uint64_t split_tag = detail::fnv1a(cfg.split);

  std::vector<int> labels(cfg.videos);
  for (std::size_t i = 0; i < cfg.videos; ++i) labels[i] = static_cast<int>(i % cfg.classes);
  auto label_rng = detail::seeded_stream(cfg.seed, split_tag, detail::fnv1a("labels"));
  std::shuffle(labels.begin(), labels.end(), label_rng);

  std::vector<ModalityBundle> out;
  out.reserve(cfg.videos);
  for (std::size_t v = 0; v < cfg.videos; ++v) {
    auto rng = detail::seeded_stream(cfg.seed, split_tag, v);
    std::normal_distribution<double> normal(0.0, 1.0);
    ModalityBundle b;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", cfg.split.c_str(), v);
    b.video_id = id;
    b.label = labels[v];
    FeatureSequence* slots[] = {&b.vit, &b.resnet, &b.audio, &b.text};
    for (std::size_t m = 0; m < 4; ++m) {
      auto& seq = *slots[m];
      seq.modality = kModalities[m];
      seq.frames = static_cast<std::uint32_t>(cfg.frames);
      seq.dim = cfg.dims[kModalities[m]];
      seq.data.resize(cfg.frames * seq.dim);
      const auto& proto = protos[m][labels[v]];
      for (std::size_t t = 0; t < cfg.frames; ++t)
        for (std::size_t d = 0; d < seq.dim; ++d)
          seq.data[t * seq.dim + d] = proto[d] + static_cast<float>(normal(rng));
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Writes four feature files per video into `dir` and returns manifest
/// entries with paths relative to `dir`.
inline std::vector<ManifestEntry> write_dataset_files(const std::vector<ModalityBundle>& bundles,
                                                      const std::filesystem::path& dir,
                                                      const std::string& split,
                                                      const ModalityDims& dims = {}) {
  std::vector<ManifestEntry> entries;
  for (const auto& b : bundles) {
    ManifestEntry e;
    e.video_id = b.video_id;
    const std::pair<const FeatureSequence*, std::filesystem::path*> slots[] = {
        {&b.vit, &e.vit}, {&b.resnet, &e.resnet}, {&b.audio, &e.audio}, {&b.text, &e.text}};
    for (const auto& [seq, rel] : slots) {
      *rel = b.video_id + "." + std::string(modality_name(seq->modality)) + ".mmfe";
      write_feature_file(*seq, dir / *rel, dims);
    }
    if (b.frame_labels) {
      e.frame_label_path = b.video_id + ".labels";
      write_frame_labels(*b.frame_labels, dir / *e.frame_label_path);
    } else {
      e.label = b.label;
    }
    e.split = split;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace cef
