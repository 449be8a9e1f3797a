#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cef/binary_io.hpp"
#include "cef/errors.hpp"
#include "cef/model.hpp"

// Checkpoint layout (little-endian):
//   "MMCK"                                 magic
//   u32 version = 1
//   config:
//     u32 classes, u32 d_model, u32 tcn_blocks, u32 kernel,
//     u32 dilations[tcn_blocks], u32 window, f32 dropout, u32 visual_width,
//     u32 dim_vit, u32 dim_resnet, u32 dim_audio, u32 dim_text
//   u32 tensor_count
//   per tensor, in ModelParams::named() order:
//     u32 rank, u32 dims[rank], f32 values[prod(dims)]

namespace cef {

inline constexpr char kCheckpointMagic[4] = {'M', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void encode_config(std::string& out, const ModelConfig& cfg) {
  bin::put_u32(out, cfg.classes);
  bin::put_u32(out, cfg.d_model);
  bin::put_u32(out, cfg.tcn_blocks);
  bin::put_u32(out, cfg.kernel);
  for (auto d : cfg.dilations) bin::put_u32(out, d);
  bin::put_u32(out, cfg.window);
  bin::put_f32(out, cfg.dropout);
  bin::put_u32(out, cfg.visual_width);
  for (Modality m : kModalities) bin::put_u32(out, cfg.dims[m]);
}

inline ModelConfig decode_config(bin::Reader& in) {
  ModelConfig cfg;
  cfg.classes = in.u32();
  cfg.d_model = in.u32();
  cfg.tcn_blocks = in.u32();
  cfg.kernel = in.u32();
  if (cfg.tcn_blocks > 1024) throw FormatError(in.source() + ": implausible tcn_blocks");
  cfg.dilations.resize(cfg.tcn_blocks);
  for (auto& d : cfg.dilations) d = in.u32();
  cfg.window = in.u32();
  cfg.dropout = in.f32();
  cfg.visual_width = in.u32();
  cfg.dims.vit = in.u32();
  cfg.dims.resnet = in.u32();
  cfg.dims.audio = in.u32();
  cfg.dims.text = in.u32();
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw FormatError(in.source() + ": invalid stored config (" + e.what() + ")");
  }
  return cfg;
}

/// FNV-1a over the serialized config; identifies architecture compatibility.
inline std::uint64_t config_hash(const ModelConfig& cfg) {
  std::string bytes;
  encode_config(bytes, cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string encode_checkpoint(const ModelParams<float>& params) {
  std::string out(kCheckpointMagic, 4);
  bin::put_u32(out, kCheckpointVersion);
  encode_config(out, params.config);
  const auto named = params.named();
  bin::put_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    bin::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) bin::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) bin::put_f32(out, v);
  }
  return out;
}

inline ModelParams<float> decode_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kCheckpointMagic, 4))
    throw FormatError(source + ": bad magic, not a checkpoint");
  bin::Reader in(bytes, source);
  in.take(4);
  const auto version = in.u32();
  if (version != kCheckpointVersion)
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  auto params = make_params<float>(decode_config(in));
  auto named = params.named();
  const auto count = in.u32();
  if (count != named.size()) {
    throw FormatError(source + ": " + std::to_string(count) + " tensors stored, config implies " +
                      std::to_string(named.size()));
  }
  for (auto& [name, t] : named) {
    const auto rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    if (shape != t.shape()) {
      throw FormatError(source + ": tensor " + name + " stored as " + shape_str(shape) +
                        ", expected " + shape_str(t.shape()));
    }
    for (auto& v : t.data()) v = in.f32();
    detail::require_finite<float>(t.data(), "checkpoint");
  }
  if (in.remaining() != 0) {
    throw CorruptionError(source + ": " + std::to_string(in.remaining()) + " trailing bytes");
  }
  return params;
}

inline void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  bin::write_file(path, encode_checkpoint(params));
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(bin::read_file(path), path.string());
}

/// Loads a checkpoint that must match `expected` (e.g. to resume training).
inline ModelParams<float> load_checkpoint_for_resume(const std::filesystem::path& path,
                                                     const ModelConfig& expected) {
  auto params = load_checkpoint(path);
  if (config_hash(params.config) != config_hash(expected)) {
    throw FormatError(path.string() + ": checkpoint was written for a different model config");
  }
  return params;
}

}  // namespace cef
