#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/feature_file.hpp"
#include "cef/ops.hpp"
#include "cef/predictions.hpp"
#include "cef/tensor.hpp"

// Multimodal frame classifier:
//
//   vit [T×768] ++ resnet [T×512] -> [T×1280] -> linear -> visual [T×512]
//   visual / audio / text -> per-modality causal TCN -> [T×D]
//   windowed co-attention over the three streams -> [T×D]
//   linear classifier -> logits [T×K]

namespace cef {

struct ModelConfig {
  std::uint32_t classes = 7;
  std::uint32_t d_model = 256;
  std::uint32_t tcn_blocks = 2;
  std::uint32_t kernel = 3;
  std::vector<std::uint32_t> dilations{1, 2};
  std::uint32_t window = 3;  // co-attention context radius
  float dropout = 0.1f;
  std::uint32_t visual_width = 512;  // fused visual feature width
  ModalityDims dims;

  void validate() const {
    if (classes < 2) throw ParameterError("model: need at least 2 classes");
    if (d_model < 1 || visual_width < 1) throw ParameterError("model: widths must be positive");
    if (tcn_blocks < 1) throw ParameterError("model: need at least one TCN block");
    if (kernel < 1) throw ParameterError("model: kernel size must be positive");
    if (dilations.size() != tcn_blocks)
      throw ParameterError("model: " + std::to_string(dilations.size()) + " dilations for " +
                           std::to_string(tcn_blocks) + " TCN blocks");
    for (auto d : dilations)
      if (d < 1) throw ParameterError("model: dilations must be >= 1");
    if (!(dropout >= 0.0f && dropout < 1.0f)) throw ParameterError("model: dropout must be in [0, 1)");
    for (Modality m : kModalities)
      if (dims[m] < 1) throw ParameterError("model: modality widths must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

enum class Mode { train, eval };

/// TCN stream index: visual, audio, text.
enum class Stream : std::size_t { visual = 0, audio = 1, text = 2 };

template <class S>
struct TcnBlock {
  Tensor<S> conv1, conv1_bias;  // [k×C_in×D], [D]
  Tensor<S> conv2, conv2_bias;  // [k×D×D], [D]
  Tensor<S> residual, residual_bias;  // [C_in×D], [D]
};

template <class S>
struct ModelParams {
  ModelConfig config;
  Tensor<S> visual_proj, visual_proj_bias;  // [(vit+resnet)×visual], [visual]
  std::array<std::vector<TcnBlock<S>>, 3> tcn;
  Tensor<S> query, key, value, output;  // [D×D] each
  Tensor<S> classifier, classifier_bias;  // [D×K], [K]

  /// All parameters in checkpoint order. Returned handles share storage.
  std::vector<std::pair<std::string, Tensor<S>>> named() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    out.emplace_back("visual_proj.weight", visual_proj);
    out.emplace_back("visual_proj.bias", visual_proj_bias);
    static constexpr const char* kStreams[] = {"visual", "audio", "text"};
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t b = 0; b < tcn[s].size(); ++b) {
        const std::string p = std::string("tcn.") + kStreams[s] + "." + std::to_string(b) + ".";
        const auto& blk = tcn[s][b];
        out.emplace_back(p + "conv1.weight", blk.conv1);
        out.emplace_back(p + "conv1.bias", blk.conv1_bias);
        out.emplace_back(p + "conv2.weight", blk.conv2);
        out.emplace_back(p + "conv2.bias", blk.conv2_bias);
        out.emplace_back(p + "residual.weight", blk.residual);
        out.emplace_back(p + "residual.bias", blk.residual_bias);
      }
    }
    out.emplace_back("coattn.query", query);
    out.emplace_back("coattn.key", key);
    out.emplace_back("coattn.value", value);
    out.emplace_back("coattn.output", output);
    out.emplace_back("classifier.weight", classifier);
    out.emplace_back("classifier.bias", classifier_bias);
    return out;
  }

  std::vector<Tensor<S>> tensors() const {
    std::vector<Tensor<S>> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  template <class T>
  ModelParams<T> cast() const;

  ModelParams clone() const { return cast<S>(); }

  void set_requires_grad(bool on) {
    for (auto& t : tensors()) t.set_requires_grad(on);
  }
};

/// Zero-filled parameters with the shapes implied by `cfg`.
template <class S>
ModelParams<S> make_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams<S> p;
  p.config = cfg;
  const std::size_t d = cfg.d_model, k = cfg.kernel;
  p.visual_proj = Tensor<S>({std::size_t{cfg.dims.vit} + cfg.dims.resnet, cfg.visual_width});
  p.visual_proj_bias = Tensor<S>({cfg.visual_width});
  const std::size_t in_width[3] = {cfg.visual_width, cfg.dims.audio, cfg.dims.text};
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t b = 0; b < cfg.tcn_blocks; ++b) {
      const std::size_t cin = b == 0 ? in_width[s] : d;
      p.tcn[s].push_back(TcnBlock<S>{Tensor<S>({k, cin, d}), Tensor<S>({d}), Tensor<S>({k, d, d}),
                                     Tensor<S>({d}), Tensor<S>({cin, d}), Tensor<S>({d})});
    }
  }
  p.query = Tensor<S>({d, d});
  p.key = Tensor<S>({d, d});
  p.value = Tensor<S>({d, d});
  p.output = Tensor<S>({d, d});
  p.classifier = Tensor<S>({d, cfg.classes});
  p.classifier_bias = Tensor<S>({cfg.classes});
  return p;
}

template <class S>
template <class T>
ModelParams<T> ModelParams<S>::cast() const {
  auto out = make_params<T>(config);
  const auto src = named();
  const auto dst = out.named();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto to = dst[i].second;
    const auto& from = src[i].second;
    for (std::size_t j = 0; j < from.numel(); ++j) to[j] = static_cast<T>(from[j]);
    to.set_requires_grad(from.requires_grad());
  }
  return out;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& [name, t] : make_params<float>(cfg).named()) n += t.numel();
  return n;
}

/// Random initialisation: He (fan-in) for the convolutions, 1/sqrt(fan-in)
/// for linear maps, a small-scale classifier so initial logits are near
/// uniform, and zero biases.
template <class S = float>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  auto p = make_params<S>(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor<S>& t, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& v : t.data()) v = static_cast<S>(normal(rng));
  };
  fill(p.visual_proj, 1.0 / std::sqrt(double(p.visual_proj.dim(0))));
  for (auto& stream : p.tcn) {
    for (auto& blk : stream) {
      fill(blk.conv1, std::sqrt(2.0 / double(blk.conv1.dim(0) * blk.conv1.dim(1))));
      fill(blk.conv2, std::sqrt(2.0 / double(blk.conv2.dim(0) * blk.conv2.dim(1))));
      fill(blk.residual, 1.0 / std::sqrt(double(blk.residual.dim(0))));
    }
  }
  const double attn = 1.0 / std::sqrt(double(cfg.d_model));
  fill(p.query, attn);
  fill(p.key, attn);
  fill(p.value, attn);
  fill(p.output, attn);
  fill(p.classifier, 1e-3);
  return p;
}

template <class S>
struct ModelInputs {
  Tensor<S> vit, resnet, audio, text;
};

template <class S>
Tensor<S> to_tensor(const FeatureSequence& seq) {
  return Tensor<S>({seq.frames, seq.dim}, std::vector<S>(seq.data.begin(), seq.data.end()));
}

template <class S>
ModelInputs<S> to_inputs(const ModalityBundle& b) {
  return {to_tensor<S>(b.vit), to_tensor<S>(b.resnet), to_tensor<S>(b.audio), to_tensor<S>(b.text)};
}

template <class S>
struct VisualFusion {
  Tensor<S> concat;  // [T×(vit+resnet)]
  Tensor<S> fused;   // [T×visual_width]
};

template <class S>
VisualFusion<S> fuse_visual(Graph<S>& g, const Tensor<S>& vit, const Tensor<S>& resnet,
                            const Tensor<S>& weight, const Tensor<S>& bias) {
  detail::require_rank(vit, 2, "fuse_visual", "vit");
  detail::require_rank(resnet, 2, "fuse_visual", "resnet");
  if (vit.dim(0) != resnet.dim(0)) {
    throw AlignmentError("fuse_visual: vit has " + std::to_string(vit.dim(0)) +
                         " frames, resnet has " + std::to_string(resnet.dim(0)));
  }
  VisualFusion<S> out;
  out.concat = concat_cols(g, vit, resnet);
  out.fused = add_bias(g, matmul(g, out.concat, weight), bias);
  return out;
}

template <class S, class Rng>
Tensor<S> tcn_forward(Graph<S>& g, const Tensor<S>& seq, const std::vector<TcnBlock<S>>& blocks,
                      const ModelConfig& cfg, Mode mode, Rng& rng) {
  detail::require_rank(seq, 2, "tcn_forward", "input");
  if (blocks.empty() || seq.dim(1) != blocks.front().conv1.dim(1)) {
    throw DimensionError("tcn_forward: input width " + std::to_string(seq.dim(1)) +
                         " does not match the stack's input width " +
                         (blocks.empty() ? std::string("<none>")
                                         : std::to_string(blocks.front().conv1.dim(1))));
  }
  Tensor<S> x = seq;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const std::size_t dil = cfg.dilations[b];
    auto h = relu(g, add_bias(g, conv1d_causal(g, x, blk.conv1, dil), blk.conv1_bias));
    h = relu(g, add_bias(g, conv1d_causal(g, h, blk.conv2, dil), blk.conv2_bias));
    auto res = add_bias(g, matmul(g, x, blk.residual), blk.residual_bias);
    x = add(g, h, res);
    if (mode == Mode::train && b + 1 < blocks.size()) x = dropout(g, x, cfg.dropout, rng);
  }
  return x;
}

/// Fuses three aligned [T×D] streams into one embedding per frame.
template <class S>
Tensor<S> coattention_fuse(Graph<S>& g, const Tensor<S>& visual, const Tensor<S>& audio,
                           const Tensor<S>& text, const Tensor<S>& wq, const Tensor<S>& wk,
                           const Tensor<S>& wv, const Tensor<S>& wo, std::size_t window,
                           std::vector<std::vector<S>>* attention = nullptr) {
  if (visual.dim(0) != audio.dim(0) || visual.dim(0) != text.dim(0)) {
    throw AlignmentError("coattention_fuse: streams have different frame counts");
  }
  auto mean = scale(g, add(g, add(g, visual, audio), text), S{1} / S{3});
  auto q = matmul(g, mean, wq);
  std::vector<Tensor<S>> keys{matmul(g, visual, wk), matmul(g, audio, wk), matmul(g, text, wk)};
  std::vector<Tensor<S>> values{matmul(g, visual, wv), matmul(g, audio, wv), matmul(g, text, wv)};
  auto attended = windowed_attention(g, q, keys, values, window, attention);
  return matmul(g, attended, wo);
}

/// Intermediate tensors of one forward pass.
template <class S>
struct ForwardTrace {
  Tensor<S> visual_concat, visual_fused;
  Tensor<S> tcn_visual, tcn_audio, tcn_text;
  Tensor<S> fused;
  Tensor<S> logits;
  std::vector<std::vector<S>> attention;
};

template <class S, class Rng>
ForwardTrace<S> forward(Graph<S>& g, const ModelInputs<S>& in, const ModelParams<S>& p, Mode mode,
                        Rng& rng) {
  const auto& cfg = p.config;
  const std::size_t frames = in.vit.dim(0);
  for (const auto* t : {&in.resnet, &in.audio, &in.text}) {
    if (t->dim(0) != frames) {
      throw AlignmentError("forward: modality frame counts differ (" + shape_str(in.vit.shape()) +
                           " vs " + shape_str(t->shape()) + ")");
    }
  }
  ForwardTrace<S> tr;
  auto vis = fuse_visual(g, in.vit, in.resnet, p.visual_proj, p.visual_proj_bias);
  tr.visual_concat = vis.concat;
  tr.visual_fused = vis.fused;
  tr.tcn_visual = tcn_forward(g, vis.fused, p.tcn[0], cfg, mode, rng);
  tr.tcn_audio = tcn_forward(g, in.audio, p.tcn[1], cfg, mode, rng);
  tr.tcn_text = tcn_forward(g, in.text, p.tcn[2], cfg, mode, rng);
  tr.fused = coattention_fuse(g, tr.tcn_visual, tr.tcn_audio, tr.tcn_text, p.query, p.key,
                              p.value, p.output, cfg.window, &tr.attention);
  tr.logits = add_bias(g, matmul(g, tr.fused, p.classifier), p.classifier_bias);
  return tr;
}

/// Eval-mode inference for one aligned bundle.
inline FramePredictions predict(const ModalityBundle& bundle, const ModelParams<float>& params) {
  Graph<float> g;
  g.set_recording(false);
  std::mt19937_64 unused(0);
  auto tr = forward(g, to_inputs<float>(bundle), params, Mode::eval, unused);
  return make_frame_predictions(bundle.video_id,
                                std::vector<float>(tr.logits.data().begin(), tr.logits.data().end()),
                                params.config.classes);
}

}  // namespace cef
