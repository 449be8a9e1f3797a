#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cef/binary_io.hpp"
#include "cef/errors.hpp"

// Per-frame feature files.
//
// Layout (little-endian):
//   0..3   magic "MMFE"
//   4..7   version, u32 = 1
//   8      modality code, u8 (0 vit, 1 resnet, 2 audio, 3 text)
//   9..12  frames T, u32
//   13..16 dim D, u32
//   17..   T*D IEEE-754 f32, row-major

namespace cef {

enum class Modality : std::uint8_t { vit = 0, resnet = 1, audio = 2, text = 3 };

inline constexpr std::array<Modality, 4> kModalities = {Modality::vit, Modality::resnet,
                                                        Modality::audio, Modality::text};

inline std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::vit: return "vit";
    case Modality::resnet: return "resnet";
    case Modality::audio: return "audio";
    case Modality::text: return "text";
  }
  return "?";
}

/// Expected feature width per modality.
struct ModalityDims {
  std::uint32_t vit = 768;
  std::uint32_t resnet = 512;
  std::uint32_t audio = 128;
  std::uint32_t text = 768;

  std::uint32_t operator[](Modality m) const {
    switch (m) {
      case Modality::vit: return vit;
      case Modality::resnet: return resnet;
      case Modality::audio: return audio;
      case Modality::text: return text;
    }
    return 0;
  }

  bool operator==(const ModalityDims&) const = default;
};

struct FeatureSequence {
  Modality modality = Modality::vit;
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;  // frames x dim, row-major

  const float* row(std::size_t t) const { return data.data() + t * dim; }

  bool operator==(const FeatureSequence&) const = default;
};

inline constexpr char kFeatureMagic[4] = {'M', 'M', 'F', 'E'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 17;

inline void validate(const FeatureSequence& seq, const ModalityDims& dims = {},
                     std::string_view context = "feature sequence") {
  const std::string where(context);
  if (seq.frames == 0) throw DimensionError(where + ": sequence has no frames");
  if (seq.dim != dims[seq.modality]) {
    throw DimensionError(where + ": " + std::string(modality_name(seq.modality)) +
                         " features must have dim " + std::to_string(dims[seq.modality]) +
                         ", got " + std::to_string(seq.dim));
  }
  if (seq.data.size() != static_cast<std::size_t>(seq.frames) * seq.dim) {
    throw DimensionError(where + ": payload holds " + std::to_string(seq.data.size()) +
                         " values, expected " + std::to_string(seq.frames) + "x" +
                         std::to_string(seq.dim));
  }
  for (std::size_t i = 0; i < seq.data.size(); ++i) {
    if (!std::isfinite(seq.data[i]))
      throw NumericError(where + ": non-finite feature value at index " + std::to_string(i));
  }
}

inline std::string encode_feature_file(const FeatureSequence& seq, const ModalityDims& dims = {}) {
  validate(seq, dims);
  std::string out;
  out.reserve(kFeatureHeaderBytes + seq.data.size() * 4);
  out.append(kFeatureMagic, 4);
  bin::put_u32(out, kFeatureVersion);
  bin::put_u8(out, static_cast<std::uint8_t>(seq.modality));
  bin::put_u32(out, seq.frames);
  bin::put_u32(out, seq.dim);
  for (float v : seq.data) bin::put_f32(out, v);
  return out;
}

inline FeatureSequence decode_feature_file(std::string_view bytes, const std::string& source,
                                           const ModalityDims& dims = {}) {
  bin::Reader in(bytes, source);
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kFeatureMagic, 4)) {
    throw FormatError(source + ": bad magic, not a feature file");
  }
  in.take(4);
  const auto version = in.u32();
  if (version != kFeatureVersion) {
    throw FormatError(source + ": unsupported feature file version " + std::to_string(version));
  }
  const auto code = in.u8();
  if (code > 3) throw FormatError(source + ": unknown modality code " + std::to_string(code));
  FeatureSequence seq;
  seq.modality = static_cast<Modality>(code);
  seq.frames = in.u32();
  seq.dim = in.u32();
  if (seq.dim != dims[seq.modality]) {
    throw DimensionError(source + ": " + std::string(modality_name(seq.modality)) +
                         " features must have dim " + std::to_string(dims[seq.modality]) +
                         ", file declares " + std::to_string(seq.dim));
  }
  if (seq.frames == 0) throw FormatError(source + ": zero frames");
  const std::size_t count = static_cast<std::size_t>(seq.frames) * seq.dim;
  if (in.remaining() != count * 4) {
    throw CorruptionError(source + ": payload is " + std::to_string(in.remaining()) +
                          " bytes, header implies " + std::to_string(count * 4));
  }
  seq.data.resize(count);
  for (auto& v : seq.data) v = in.f32();
  validate(seq, dims, source);
  return seq;
}

inline void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path,
                               const ModalityDims& dims = {}) {
  bin::write_file(path, encode_feature_file(seq, dims));
}

inline FeatureSequence read_feature_file(const std::filesystem::path& path,
                                         const ModalityDims& dims = {}) {
  return decode_feature_file(bin::read_file(path), path.string(), dims);
}

}  // namespace cef
