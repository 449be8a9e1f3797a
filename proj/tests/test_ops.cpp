#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cef/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using cef::Graph;
using cef::Tensor;
using testutil::random_tensor;
using testutil::to_double;

TEST(Matmul, IdentityLeavesMatrix) {
  Graph<float> g;
  Tensor<float> eye({2, 2}, {1, 0, 0, 1});
  Tensor<float> m({2, 2}, {3, 4, 5, 6});
  auto r = cef::matmul(g, eye, m);
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{3, 4, 5, 6}));
}

TEST(Matmul, RowTimesColumn) {
  Graph<float> g;
  auto r = cef::matmul(g, Tensor<float>({1, 2}, {1, 2}), Tensor<float>({2, 1}, {3, 4}));
  EXPECT_EQ(r.shape(), (cef::Shape{1, 1}));
  EXPECT_EQ(r[0], 11.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  Graph<float> g;
  auto a = random_tensor<float>({4, 3}, rng);
  auto b = random_tensor<float>({3, 5}, rng);
  auto r = cef::matmul(g, a, b);
  const auto want = oracle::matmul(to_double(a), to_double(b), 4, 3, 5);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(r[i], want[i], 1e-6);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Graph<float> g;
  try {
    cef::matmul(g, Tensor<float>({2, 3}), Tensor<float>({4, 5}));
    FAIL();
  } catch (const cef::DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeWithinTolerance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Graph<float> g;
    auto a = random_tensor<float>({3, 4}, rng);
    auto b = random_tensor<float>({4, 2}, rng);
    auto c = random_tensor<float>({2, 5}, rng);
    auto left = cef::matmul(g, cef::matmul(g, a, b), c);
    auto right = cef::matmul(g, a, cef::matmul(g, b, c));
    for (std::size_t i = 0; i < left.numel(); ++i) EXPECT_NEAR(left[i], right[i], 1e-4);
  }
}

TEST(Conv, IdentityKernel) {
  Graph<float> g;
  Tensor<float> x({3, 1}, {1, 2, 3});
  auto y = cef::conv1d_causal(g, x, Tensor<float>({1, 1, 1}, {1}), 1);
  EXPECT_EQ(to_double(y), to_double(x));
}

TEST(Conv, CausalPairSums) {
  Graph<float> g;
  Tensor<float> x({3, 1}, {1, 2, 3});
  auto y = cef::conv1d_causal(g, x, Tensor<float>({2, 1, 1}, {1, 1}), 1);
  EXPECT_EQ(to_double(y), (std::vector<double>{1, 3, 5}));
}

TEST(Conv, MatchesNestedLoop) {
  std::mt19937_64 rng(13);
  Graph<float> g;
  auto x = random_tensor<float>({7, 4}, rng);
  auto w = random_tensor<float>({3, 4, 5}, rng);
  auto y = cef::conv1d_causal(g, x, w, 2);
  const auto want = oracle::conv_causal(to_double(x), 7, 4, to_double(w), 3, 5, 2);
  ASSERT_EQ(y.shape(), (cef::Shape{7, 5}));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-6);
}

TEST(Conv, RejectsZeroDilation) {
  Graph<float> g;
  EXPECT_THROW(cef::conv1d_causal(g, Tensor<float>({2, 1}), Tensor<float>({1, 1, 1}), 0),
               cef::ParameterError);
}

TEST(Conv, PerturbingFrameLeavesEarlierOutputsExactlyEqual) {
  std::mt19937_64 rng(14);
  auto x = random_tensor<float>({12, 3}, rng);
  auto w = random_tensor<float>({3, 3, 4}, rng);
  Graph<float> g;
  const auto base = to_double(cef::conv1d_causal(g, x, w, 2));
  for (std::size_t t = 0; t < 12; ++t) {
    auto xp = x.clone();
    for (std::size_t c = 0; c < 3; ++c) xp.at(t, c) += 10.0f;
    const auto moved = to_double(cef::conv1d_causal(g, xp, w, 2));
    for (std::size_t u = 0; u < t * 4; ++u) EXPECT_EQ(moved[u], base[u]) << "t=" << t;
  }
}

TEST(Softmax, UniformRow) {
  Graph<float> g;
  auto p = cef::softmax(g, Tensor<float>({1, 4}, {0, 0, 0, 0}), 1);
  for (float v : p.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Softmax, AnalyticTwoClass) {
  Graph<double> g;
  for (double c : {-30.0, 0.0, 4.5, 100.0}) {
    auto p = cef::softmax(g, Tensor<double>({1, 2}, {c, c + std::log(3.0)}), 1);
    EXPECT_NEAR(p[0], 0.25, 1e-12);
    EXPECT_NEAR(p[1], 0.75, 1e-12);
  }
}

TEST(Softmax, MatchesWideOracle) {
  std::mt19937_64 rng(15);
  Graph<float> g;
  auto x = random_tensor<float>({1, 5}, rng, 3.0);
  auto p = cef::softmax(g, x, 1);
  const auto want = oracle::softmax(to_double(x));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], want[i], 1e-6);
}

TEST(Softmax, RowsSumToOneInOpenInterval) {
  std::mt19937_64 rng(16);
  Graph<float> g;
  auto x = random_tensor<float>({50, 7}, rng, 4.0);
  auto p = cef::softmax(g, x, 1);
  for (std::size_t r = 0; r < 50; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GT(p.at(r, c), 0.0f);
      EXPECT_LT(p.at(r, c), 1.0f);
      total += p.at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, AlongFirstAxis) {
  Graph<double> g;
  auto p = cef::softmax(g, Tensor<double>({2, 2}, {0, 1, 0, 1}), 0);
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Softmax, NonFiniteInputIsNumericError) {
  Graph<float> g;
  Tensor<float> x({1, 2}, {0.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(cef::softmax(g, x, 1), cef::NumericError);
}

TEST(CrossEntropy, UniformLogitsGiveLnK) {
  Graph<float> g;
  Tensor<float> logits({3, 7});
  const std::vector<int> targets{0, 3, 6};
  auto loss = cef::cross_entropy(g, logits, std::span<const int>(targets));
  EXPECT_NEAR(loss.item(), std::log(7.0), 1e-6);
}

TEST(CrossEntropy, ConfidentPredictionNearZero) {
  Graph<float> g;
  Tensor<float> logits({2, 4});
  logits.at(0, 1) = 20;
  logits.at(1, 3) = 20;
  const std::vector<int> targets{1, 3};
  EXPECT_LT(cef::cross_entropy(g, logits, std::span<const int>(targets)).item(), 1e-6f);
}

TEST(CrossEntropy, MatchesLogSoftmaxOracle) {
  std::mt19937_64 rng(17);
  Graph<float> g;
  auto logits = random_tensor<float>({3, 4}, rng, 2.0);
  const std::vector<int> targets{2, 0, 3};
  const double got = cef::cross_entropy(g, logits, std::span<const int>(targets)).item();
  EXPECT_NEAR(got, oracle::cross_entropy(to_double(logits), 3, 4, targets), 1e-5);

  const std::vector<float> w{0.5f, 1.0f, 2.0f, 3.0f};
  const double weighted =
      cef::cross_entropy(g, logits, std::span<const int>(targets),
                         std::optional<std::span<const float>>(w)).item();
  EXPECT_NEAR(weighted, oracle::cross_entropy(to_double(logits), 3, 4, targets, {0.5, 1, 2, 3}), 1e-5);
}

TEST(CrossEntropy, EqualWeightsMatchUnweightedExactly) {
  std::mt19937_64 rng(18);
  auto logits = random_tensor<float>({9, 7}, rng, 2.0, true);
  const std::vector<int> targets{0, 1, 2, 3, 4, 5, 6, 0, 1};
  const std::vector<float> w(7, 2.5f);
  Graph<float> g1, g2;
  auto plain = cef::cross_entropy(g1, logits, std::span<const int>(targets));
  cef::backward(g1, plain);
  const std::vector<float> grad_plain(logits.grad().begin(), logits.grad().end());
  auto weighted =
      cef::cross_entropy(g2, logits, std::span<const int>(targets),
                         std::optional<std::span<const float>>(w));
  cef::backward(g2, weighted);
  EXPECT_EQ(plain.item(), weighted.item());
  EXPECT_EQ(grad_plain, std::vector<float>(logits.grad().begin(), logits.grad().end()));
}

TEST(CrossEntropy, OutOfRangeTargetNamesFrame) {
  Graph<float> g;
  Tensor<float> logits({3, 4});
  const std::vector<int> targets{0, 4, 1};
  try {
    cef::cross_entropy(g, logits, std::span<const int>(targets));
    FAIL();
  } catch (const cef::LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
}

TEST(Attention, MatchesLoopOracle) {
  std::mt19937_64 rng(19);
  const std::size_t T = 3, D = 4;
  Graph<double> g;
  auto q = random_tensor<double>({T, D}, rng);
  std::vector<Tensor<double>> keys, values;
  std::vector<oracle::Matrix> ok, ov;
  for (int s = 0; s < 3; ++s) {
    keys.push_back(random_tensor<double>({T, D}, rng));
    values.push_back(random_tensor<double>({T, D}, rng));
    ok.push_back(to_double(keys.back()));
    ov.push_back(to_double(values.back()));
  }
  std::vector<std::vector<double>> weights;
  auto out = cef::windowed_attention(g, q, keys, values, 1, &weights);
  const auto want = oracle::windowed_attention(to_double(q), ok, ov, T, D, 1);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out[i], want[i], 1e-5);
  ASSERT_EQ(weights.size(), T);
  EXPECT_EQ(weights[0].size(), 6u);  // frames {0,1} x 3 streams
  EXPECT_EQ(weights[1].size(), 9u);
  for (const auto& w : weights) {
    double total = 0;
    for (double v : w) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Dropout, ZeroRateIsIdentityAndEvalFree) {
  std::mt19937_64 rng(20);
  Graph<float> g;
  auto x = random_tensor<float>({4, 4}, rng);
  auto y = cef::dropout(g, x, 0.0, rng);
  EXPECT_EQ(to_double(y), to_double(x));
}

TEST(Dropout, KeptValuesAreRescaled) {
  std::mt19937_64 rng(21);
  Graph<float> g;
  Tensor<float> x({100, 10}, std::vector<float>(1000, 1.0f));
  auto y = cef::dropout(g, x, 0.5, rng);
  std::size_t zeros = 0;
  for (float v : y.data()) {
    if (v == 0.0f) ++zeros;
    else EXPECT_FLOAT_EQ(v, 2.0f);
  }
  EXPECT_GT(zeros, 400u);
  EXPECT_LT(zeros, 600u);
}

TEST(ConcatCols, RowMismatchIsAlignmentError) {
  Graph<float> g;
  EXPECT_THROW(cef::concat_cols(g, Tensor<float>({2, 3}), Tensor<float>({3, 3})),
               cef::AlignmentError);
}

TEST(ArgmaxRows, LowestIndexWinsTies) {
  const std::vector<float> v{1, 3, 3, 0, 5, 5, 5, 5};
  EXPECT_EQ(cef::argmax_rows<float>(v, 4), (std::vector<int>{1, 0}));
}

TEST(Replay, SameInputsBitIdentical) {
  std::mt19937_64 rng(22);
  auto a = random_tensor<float>({6, 5}, rng);
  auto b = random_tensor<float>({5, 4}, rng);
  auto run = [&] {
    Graph<float> g;
    return to_double(cef::softmax(g, cef::relu(g, cef::matmul(g, a, b)), 1));
  };
  EXPECT_EQ(run(), run());
}
