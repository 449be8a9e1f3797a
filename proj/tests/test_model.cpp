#include <gtest/gtest.h>

#include <random>

#include "cef/model.hpp"
#include "cef/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cef;
using testutil::random_tensor;
using testutil::to_double;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 8;
  c.visual_width = 10;
  c.dims = {12, 6, 5, 7};
  c.window = 1;
  return c;
}

ModalityBundle synth_bundle(const ModelConfig& cfg, std::size_t frames, std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.videos = 1;
  sc.frames = frames;
  sc.seed = seed;
  sc.dims = cfg.dims;
  sc.classes = cfg.classes;
  return synth_dataset(sc).front();
}

std::vector<double> eval_logits(const ModelInputs<float>& in, const ModelParams<float>& p) {
  Graph<float> g;
  g.set_recording(false);
  std::mt19937_64 rng(0);
  return to_double(forward(g, in, p, Mode::eval, rng).logits);
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.classes = 1;
  EXPECT_THROW(c.validate(), ParameterError);
  c = ModelConfig{};
  c.dilations = {1};
  EXPECT_THROW(c.validate(), ParameterError);
  c = ModelConfig{};
  c.dilations = {1, 0};
  EXPECT_THROW(c.validate(), ParameterError);
  c = ModelConfig{};
  c.window = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelParams, CountIsPureFunctionOfConfig) {
  const ModelConfig c;
  const std::size_t D = 256, k = 3, K = 7;
  std::size_t want = 1280 * 512 + 512;
  for (std::size_t in : {512u, 128u, 768u}) {
    want += k * in * D + D + k * D * D + D + in * D + D;
    want += k * D * D + D + k * D * D + D + D * D + D;
  }
  want += 4 * D * D + D * K + K;
  EXPECT_EQ(parameter_count(c), want);
  std::size_t counted = 0;
  for (const auto& t : init_params<float>(c, 1).tensors()) counted += t.numel();
  EXPECT_EQ(counted, want);
  EXPECT_EQ(parameter_count(c), parameter_count(ModelConfig{}));
}

TEST(ModelParams, InitIsSeededAndFinite) {
  const auto c = small_config();
  const auto a = init_params<float>(c, 4), b = init_params<float>(c, 4), d = init_params<float>(c, 5);
  const auto ta = a.tensors(), tb = b.tensors(), td = d.tensors();
  bool differs = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(to_double(ta[i]), to_double(tb[i]));
    differs |= to_double(ta[i]) != to_double(td[i]);
    for (float v : ta[i].data()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_TRUE(differs);
  for (auto& [name, t] : a.named())
    if (name.ends_with("bias")) for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
}

TEST(FuseVisual, ShapeChain) {
  const ModelConfig c;
  auto p = init_params<float>(c, 1);
  std::mt19937_64 rng(2);
  Graph<float> g;
  auto vit = random_tensor<float>({5, 768}, rng), res = random_tensor<float>({5, 512}, rng);
  auto out = fuse_visual(g, vit, res, p.visual_proj, p.visual_proj_bias);
  EXPECT_EQ(out.concat.shape(), (Shape{5, 1280}));
  EXPECT_EQ(out.fused.shape(), (Shape{5, 512}));
}

TEST(FuseVisual, SelectorWeightsPickFirstColumns) {
  std::mt19937_64 rng(3);
  Graph<float> g;
  auto vit = random_tensor<float>({4, 768}, rng), res = random_tensor<float>({4, 512}, rng);
  Tensor<float> w({1280, 512}), b({512});
  for (std::size_t i = 0; i < 512; ++i) w.at(i, i) = 1.0f;
  auto out = fuse_visual(g, vit, res, w, b);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 512; ++i) EXPECT_EQ(out.fused.at(t, i), vit.at(t, i));
}

TEST(FuseVisual, MatchesConcatThenMatmul) {
  std::mt19937_64 rng(4);
  Graph<float> g;
  auto vit = random_tensor<float>({3, 768}, rng), res = random_tensor<float>({3, 512}, rng);
  auto w = random_tensor<float>({1280, 512}, rng, 0.03), b = random_tensor<float>({512}, rng);
  auto out = fuse_visual(g, vit, res, w, b);
  oracle::Matrix cat;
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 768; ++i) cat.push_back(vit.at(t, i));
    for (std::size_t i = 0; i < 512; ++i) cat.push_back(res.at(t, i));
  }
  auto want = oracle::matmul(cat, to_double(w), 3, 1280, 512);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(out.fused.at(t, i), want[t * 512 + i] + b[i], 1e-5);
}

TEST(FuseVisual, FrameMismatchIsAlignmentError) {
  Graph<float> g;
  auto p = init_params<float>(ModelConfig{}, 1);
  EXPECT_THROW(fuse_visual(g, Tensor<float>({3, 768}), Tensor<float>({4, 512}), p.visual_proj,
                           p.visual_proj_bias),
               AlignmentError);
}

TEST(Tcn, ZeroInputZeroBiasGivesZero) {
  const auto c = small_config();
  auto p = init_params<float>(c, 1);
  Graph<float> g;
  std::mt19937_64 rng(0);
  auto y = tcn_forward(g, Tensor<float>({6, 5}), p.tcn[1], c, Mode::eval, rng);
  EXPECT_EQ(y.shape(), (Shape{6, 8}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tcn, WidthMismatchIsDimensionError) {
  const auto c = small_config();
  auto p = init_params<float>(c, 1);
  Graph<float> g;
  std::mt19937_64 rng(0);
  EXPECT_THROW(tcn_forward(g, Tensor<float>({6, 4}), p.tcn[1], c, Mode::eval, rng), DimensionError);
}

TEST(Tcn, CausalExactly) {
  const auto c = small_config();
  auto p = init_params<float>(c, 1);
  std::mt19937_64 rng(5), unused(0);
  auto x = random_tensor<float>({10, 5}, rng);
  Graph<float> g;
  const auto base = to_double(tcn_forward(g, x, p.tcn[1], c, Mode::eval, unused));
  for (std::size_t t = 0; t < 10; ++t) {
    auto xp = x.clone();
    for (std::size_t i = 0; i < 5; ++i) xp.at(t, i) += 5.0f;
    const auto moved = to_double(tcn_forward(g, xp, p.tcn[1], c, Mode::eval, unused));
    for (std::size_t u = 0; u < t * 8; ++u) ASSERT_EQ(moved[u], base[u]) << "t=" << t;
    bool changed = false;
    for (std::size_t u = t * 8; u < moved.size(); ++u) changed |= moved[u] != base[u];
    EXPECT_TRUE(changed);
  }
}

TEST(Tcn, KernelOneCollapsesToResidualMlp) {
  ModelConfig c = small_config();
  c.kernel = 1;
  c.tcn_blocks = 1;
  c.dilations = {1};
  auto p = init_params<double>(c, 2);
  std::mt19937_64 rng(6);
  auto& blk = p.tcn[1][0];
  for (auto* b : {&blk.conv1_bias, &blk.conv2_bias, &blk.residual_bias})
    for (auto& v : b->data()) v = std::normal_distribution<double>(0, 0.5)(rng);
  auto x = random_tensor<double>({4, 5}, rng);
  Graph<double> g;
  auto y = tcn_forward(g, x, p.tcn[1], c, Mode::eval, rng);

  const std::size_t D = 8;
  auto h = oracle::matmul(to_double(x), to_double(blk.conv1), 4, 5, D);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i] + blk.conv1_bias[i % D]);
  auto h2 = oracle::matmul(h, to_double(blk.conv2), 4, D, D);
  auto r = oracle::matmul(to_double(x), to_double(blk.residual), 4, 5, D);
  for (std::size_t i = 0; i < h2.size(); ++i) {
    const double want = std::max(0.0, h2[i] + blk.conv2_bias[i % D]) + r[i] + blk.residual_bias[i % D];
    EXPECT_NEAR(y[i], want, 1e-5);
  }
}

TEST(CoAttention, DegenerateWindowReturnsSharedVector) {
  const std::size_t T = 4, D = 3;
  std::mt19937_64 rng(7);
  auto v = random_tensor<float>({T, D}, rng);
  auto wq = random_tensor<float>({D, D}, rng), wk = random_tensor<float>({D, D}, rng);
  Tensor<float> eye({D, D});
  for (std::size_t i = 0; i < D; ++i) eye.at(i, i) = 1.0f;
  Graph<float> g;
  auto out = coattention_fuse(g, v, v, v, wq, wk, eye, eye, 0);
  for (std::size_t i = 0; i < T * D; ++i) EXPECT_NEAR(out[i], v[i], 1e-6);
}

TEST(CoAttention, MatchesLoopOracle) {
  const std::size_t T = 3, D = 4;
  std::mt19937_64 rng(8);
  auto a = random_tensor<double>({T, D}, rng), b = random_tensor<double>({T, D}, rng),
       c = random_tensor<double>({T, D}, rng);
  auto wq = random_tensor<double>({D, D}, rng), wk = random_tensor<double>({D, D}, rng),
       wv = random_tensor<double>({D, D}, rng), wo = random_tensor<double>({D, D}, rng);
  Graph<double> g;
  std::vector<std::vector<double>> attn;
  auto out = coattention_fuse(g, a, b, c, wq, wk, wv, wo, 1, &attn);

  oracle::Matrix mean(T * D);
  for (std::size_t i = 0; i < T * D; ++i) mean[i] = (a[i] + b[i] + c[i]) / 3.0;
  const auto q = oracle::matmul(mean, to_double(wq), T, D, D);
  std::vector<oracle::Matrix> keys, vals;
  for (const auto* s : {&a, &b, &c}) {
    keys.push_back(oracle::matmul(to_double(*s), to_double(wk), T, D, D));
    vals.push_back(oracle::matmul(to_double(*s), to_double(wv), T, D, D));
  }
  const auto want = oracle::matmul(oracle::windowed_attention(q, keys, vals, T, D, 1), to_double(wo), T, D, D);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out[i], want[i], 1e-5);
  for (const auto& w : attn) {
    double s = 0;
    for (double x : w) s += x;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(CoAttention, FrameMismatchIsAlignmentError) {
  Graph<float> g;
  Tensor<float> w({2, 2});
  EXPECT_THROW(coattention_fuse(g, Tensor<float>({3, 2}), Tensor<float>({3, 2}), Tensor<float>({2, 2}),
                                w, w, w, w, 1),
               AlignmentError);
}

TEST(Forward, OutputShapesForSevenClasses) {
  const ModelConfig c;
  const auto bundle = synth_bundle(c, 6);
  const auto p = init_params<float>(c, 1);
  const auto pred = predict(bundle, p);
  EXPECT_EQ(pred.logits.size(), 6u * 7);
  EXPECT_EQ(pred.probs.size(), 6u * 7);
  EXPECT_EQ(pred.labels.size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) {
    double s = 0;
    for (float v : pred.prob_row(t)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Forward, TraceShapes) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 1);
  Graph<float> g;
  std::mt19937_64 rng(0);
  auto tr = forward(g, to_inputs<float>(synth_bundle(c, 5)), p, Mode::eval, rng);
  EXPECT_EQ(tr.visual_concat.shape(), (Shape{5, 18}));
  EXPECT_EQ(tr.visual_fused.shape(), (Shape{5, 10}));
  for (const auto* t : {&tr.tcn_visual, &tr.tcn_audio, &tr.tcn_text, &tr.fused})
    EXPECT_EQ(t->shape(), (Shape{5, 8}));
  EXPECT_EQ(tr.logits.shape(), (Shape{5, 7}));
  EXPECT_EQ(tr.attention.size(), 5u);
}

TEST(Forward, EvalIsDeterministicTrainUsesDropout) {
  const auto c = small_config();
  auto p = init_params<float>(c, 1);
  const auto in = to_inputs<float>(synth_bundle(c, 7));
  EXPECT_EQ(eval_logits(in, p), eval_logits(in, p));
  Graph<float> g;
  std::mt19937_64 r1(1), r2(2);
  auto a = to_double(forward(g, in, p, Mode::train, r1).logits);
  auto b = to_double(forward(g, in, p, Mode::train, r2).logits);
  EXPECT_NE(a, b);
}

TEST(Forward, CausalBeyondAttentionWindow) {
  auto c = small_config();
  c.window = 2;
  const auto p = init_params<float>(c, 3);
  const auto bundle = synth_bundle(c, 12);
  const auto base = eval_logits(to_inputs<float>(bundle), p);
  for (std::size_t t = 0; t < 12; ++t) {
    auto moved_bundle = bundle;
    for (auto* s : {&moved_bundle.vit, &moved_bundle.resnet, &moved_bundle.audio, &moved_bundle.text})
      for (std::size_t d = 0; d < s->dim; ++d) s->data[t * s->dim + d] += 3.0f;
    const auto moved = eval_logits(to_inputs<float>(moved_bundle), p);
    const std::size_t safe = t > c.window ? t - c.window : 0;
    for (std::size_t u = 0; u < safe * 7; ++u) ASSERT_EQ(moved[u], base[u]) << "t=" << t;
  }
}

TEST(Forward, EveryParameterReceivesGradient) {
  const auto c = small_config();
  auto p = init_params<float>(c, 1);
  p.set_requires_grad(true);
  const auto bundle = synth_bundle(c, 8);
  Graph<float> g;
  std::mt19937_64 rng(0);
  auto tr = forward(g, to_inputs<float>(bundle), p, Mode::train, rng);
  const auto targets = bundle.frame_targets();
  auto loss = cross_entropy(g, tr.logits, std::span<const int>(targets));
  backward(g, loss);
  for (const auto& [name, t] : p.named()) {
    bool nonzero = false;
    for (float v : t.grad()) nonzero |= v != 0.0f;
    EXPECT_TRUE(nonzero) << name;
  }
}

TEST(Forward, ArgmaxInvariantToPerFrameShift) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor<float>({6, 7}, rng);
    std::vector<float> shifted(logits.data().begin(), logits.data().end());
    for (std::size_t t = 0; t < 6; ++t) {
      const float s = static_cast<float>(std::uniform_int_distribution<int>(-8, 8)(rng));
      for (std::size_t k = 0; k < 7; ++k) shifted[t * 7 + k] += s;
    }
    EXPECT_EQ(argmax_rows<float>(logits.data(), 7), argmax_rows<float>(shifted, 7));
  }
}

TEST(Forward, ModalityFrameMismatchIsAlignmentError) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 1);
  auto in = to_inputs<float>(synth_bundle(c, 5));
  in.audio = Tensor<float>({4, 5});
  Graph<float> g;
  std::mt19937_64 rng(0);
  EXPECT_THROW(forward(g, in, p, Mode::eval, rng), AlignmentError);
}
