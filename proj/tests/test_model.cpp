// Copyright 2026 The fewseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fewseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fewseg/error.hpp"
#include "fewseg/layers.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fewseg {
namespace {

using testing::random_query;
using testing::random_support;
using testing::tiny_config;

using testing::jitter;

TEST(ConfigTest, ShapeArithmetic) {
  EXPECT_EQ(ModelConfig::desk().deepest_side(), 14);
  EXPECT_EQ(ModelConfig::vgg16_like().deepest_side(), 7);
  ModelConfig c = ModelConfig::desk();
  EXPECT_EQ(c.stage_channels(1), 16);
  EXPECT_EQ(c.stage_channels(4), 128);
  EXPECT_EQ(ModelConfig::vgg16_like().stage_channels(5), 512);
  ModelConfig bad = c;
  bad.input_size = 100;  // not divisible by 2^4
  EXPECT_THROW(bad.check(), InvalidArgument);
}

TEST(ParamsTest, InitIsDeterministicPerSeed) {
  ModelConfig c = tiny_config(16);
  EXPECT_EQ(init_params<float>(c, 3), init_params<float>(c, 3));
  EXPECT_NE(init_params<float>(c, 3), init_params<float>(c, 4));
  EXPECT_TRUE(init_params<float>(c, 3).all_finite());
}

TEST(EncoderTest, StageShapes) {
  ModelConfig c = ModelConfig::desk();
  Network<float> net(c);
  auto p = init_params<float>(c, 1);
  std::mt19937_64 rng(1);
  FeatureStack<float> maps = net.encode(p, random_query<float>(224, rng));
  ASSERT_EQ(maps.size(), 4u);
  EXPECT_EQ(maps.back().grid.height, 14);
  EXPECT_EQ(maps.back().grid.channels, 128);
  EXPECT_EQ(maps.front().grid.height, 112);
}

TEST(EncoderTest, ZeroImageGivesFiniteOutput) {
  ModelConfig c = tiny_config(224);
  Network<float> net(c);
  auto p = init_params<float>(c, 2);
  Tensor<float> zero(kInputChannels, 224, 224);
  std::vector<Tensor<float>> s = {zero};
  Prediction pred = net.forward(p, s, zero);
  for (float v : pred.probs.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(FuseTest, MeanProperties) {
  std::mt19937_64 rng(3);
  ModelConfig c = tiny_config(16);
  Network<double> net(c);
  auto p = init_params<double>(c, 3);
  auto a = net.encode(p, random_support<double>(16, rng));
  auto b = net.encode(p, random_support<double>(16, rng));
  std::vector<FeatureStack<double>> one = {a}, same = {a, a, a}, ab = {a, b}, ba = {b, a};
  EXPECT_EQ(fuse_supports<double>(one)[0].grid, a[0].grid);
  EXPECT_EQ(fuse_supports<double>(same)[1].grid, a[1].grid);  // exact: summed in extended precision
  EXPECT_EQ(fuse_supports<double>(ab)[1].grid, fuse_supports<double>(ba)[1].grid);
  const auto fused = fuse_supports<double>(ab);
  EXPECT_NEAR(fused[0].grid.data[5], 0.5 * (a[0].grid.data[5] + b[0].grid.data[5]), 1e-15);

  std::vector<FeatureStack<double>> none;
  EXPECT_THROW(fuse_supports<double>(none), InvalidArgument);
  auto other = net.encode(p, random_support<double>(16, rng));
  other[0].grid = Tensor<double>(1, 2, 2);
  std::vector<FeatureStack<double>> mismatched = {a, other};
  EXPECT_THROW(fuse_supports<double>(mismatched), InvalidArgument);
}

TEST(RelationTest, MatchesDirectPointwiseComputation) {
  ModelConfig c = tiny_config(16);
  Network<double> net(c);
  std::mt19937_64 rng(4);
  auto p = init_params<double>(c, 4);
  jitter(p, rng, 0.1);
  const int C = c.stage_channels(c.encoder.n_stages), side = c.deepest_side(), R = c.relation_width();
  Tensor<double> zero(C, side, side);
  Tensor<double> q = testing::random_tensor<double>(C, side, side, rng);
  auto rel = net.relate(p, zero, q);
  ASSERT_EQ(rel.combined.channels, 2 * C);
  ASSERT_EQ(rel.out.channels, R);
  // First layer by hand: only the query half of the weights can contribute.
  const auto& w = p.find("rel.c1.w");
  const auto& b = p.find("rel.c1.b");
  for (int o = 0; o < R; ++o)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double acc = b.values[o];
        for (int ch = 0; ch < C; ++ch) acc += w.values[o * 2 * C + C + ch] * q.at(ch, y, x);
        EXPECT_NEAR(rel.hidden.at(o, y, x), std::max(0.0, acc), 1e-12);
      }
  auto swapped = net.relate(p, q, zero);
  EXPECT_NE(swapped.out, rel.out);
}

TEST(DecoderTest, ConstantNetworkGivesSigmoidOfBias) {
  ModelConfig c = tiny_config(224);
  Network<double> net(c);
  auto p = init_params<double>(c, 5).zeros_like();
  p.find("dec.head.b").values[0] = 0.7;
  std::mt19937_64 rng(5);
  std::vector<Tensor<double>> s = {random_support<double>(224, rng)};
  Prediction pred = net.forward(p, s, random_query<double>(224, rng));
  const float want = static_cast<float>(1.0 / (1.0 + std::exp(-0.7)));
  for (float v : pred.probs.values) ASSERT_FLOAT_EQ(v, want);
}

TEST(ForwardTest, InvariantsOnTinyConfig) {
  ModelConfig c = tiny_config(224);
  Network<float> net(c);
  std::mt19937_64 rng(6);
  for (int draw = 0; draw < 5; ++draw) {
    auto p = init_params<float>(c, 100 + draw);
    jitter(p, rng, 0.05);
    std::vector<Tensor<float>> s;
    for (int k = 0; k < 3; ++k) s.push_back(random_support<float>(224, rng));
    auto q = random_query<float>(224, rng);
    Prediction base = net.forward(p, s, q);
    ASSERT_EQ(base.probs.rows, 224);
    ASSERT_EQ(base.probs.cols, 224);
    for (float v : base.probs.values) ASSERT_TRUE(v > 0.0f && v < 1.0f);

    std::vector<Tensor<float>> perm = {s[2], s[0], s[1]};
    Prediction permuted = net.forward(p, perm, q);
    for (std::size_t i = 0; i < base.probs.size(); ++i)
      ASSERT_NEAR(permuted.probs.values[i], base.probs.values[i], 1e-6);

    std::vector<Tensor<float>> single = {s[0]}, dup = {s[0], s[0], s[0], s[0], s[0]};
    EXPECT_EQ(net.forward(p, single, q).probs, net.forward(p, dup, q).probs);

    auto q2 = random_query<float>(224, rng);
    EXPECT_NE(net.forward(p, s, q2).probs, base.probs);
    EXPECT_EQ(net.forward(p, s, q).probs, base.probs);
  }
}

// Central differences in extended precision on a 16x16 input.
TEST(GradientTest, MatchesFiniteDifferences) {
  for (LossKind kind : {LossKind::bce, LossKind::mse}) {
    testing::GradientCheck check = testing::check_gradient(kind, 7);
    EXPECT_NEAR(check.loss, check.reference, 1e-12);
    ASSERT_GE(check.samples.size(), 200u);
    for (const auto& g : check.samples)
      EXPECT_LT(g.rel, 1e-4) << to_string(kind) << ' ' << g.array << '[' << g.index << "] analytic " << g.analytic
                             << " fd " << g.numeric;
    RecordProperty(std::string("worst_rel_") + to_string(kind), std::to_string(check.worst()));
  }
}

TEST(GradientTest, LayerKernelsAreAdjoint) {
  std::mt19937_64 rng(8);
  auto x = testing::random_tensor<double>(3, 7, 5, rng, -1, 1);
  std::vector<double> col;
  nn::im2col(x, 3, col);
  std::vector<double> g(col.size());
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : g) v = u(rng);
  double lhs = 0.0;
  for (std::size_t i = 0; i < col.size(); ++i) lhs += col[i] * g[i];
  Tensor<double> back(3, 7, 5);
  nn::col2im_add(g, 3, back);
  double rhs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * back.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(ConvTest, MatchesDirectLoop) {
  std::mt19937_64 rng(9);
  auto x = testing::random_tensor<double>(3, 30, 9, rng, -1, 1);
  std::vector<double> w(4 * 3 * 9), b(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : w) v = u(rng);
  for (auto& v : b) v = u(rng);
  Tensor<double> y = nn::conv2d<double>(x, w, b, 4, 3);
  for (int o = 0; o < 4; ++o)
    for (int r = 0; r < 30; ++r)
      for (int c = 0; c < 9; ++c) {
        double acc = b[o];
        for (int i = 0; i < 3; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int rr = r + ky - 1, cc = c + kx - 1;
              if (rr < 0 || rr >= 30 || cc < 0 || cc >= 9) continue;
              acc += w[((o * 3 + i) * 3 + ky) * 3 + kx] * x.at(i, rr, cc);
            }
        ASSERT_NEAR(y.at(o, r, c), acc, 1e-12);
      }
}

TEST(MultiwayTest, CombineRules) {
  Prediction a{Grid<float>(1, 3)}, b{Grid<float>(1, 3)};
  a.probs.values = {0.9f, 0.3f, 0.6f};
  b.probs.values = {0.2f, 0.4f, 0.6f};
  std::vector<Prediction> both = {a, b};
  auto labels = combine_class_probabilities(both);
  EXPECT_EQ(labels.values, (std::vector<std::int32_t>{1, 0, 1}));
}

TEST(MultiwayTest, SingleClassEqualsThresholdedForward) {
  ModelConfig c = tiny_config(224);
  Network<float> net(c);
  auto p = init_params<float>(c, 10);
  std::mt19937_64 rng(10);
  ImageMaskPair pair;
  pair.image = ColorImage(224, 224);
  for (auto& v : pair.image.planes) v = std::uniform_real_distribution<float>(0, 1)(rng);
  pair.mask = testing::random_mask(224, 224, rng);
  ColorImage query(224, 224);
  for (auto& v : query.planes) v = std::uniform_real_distribution<float>(0, 1)(rng);
  std::vector<std::vector<ImageMaskPair>> per_class = {{pair}};
  auto labels = multiway_segment<float>(net, p, per_class, query);
  std::vector<ImageMaskPair> sup = {pair};
  Mask m = threshold_mask(net.forward(p, sup, query));
  for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(labels.values[i], static_cast<std::int32_t>(m.values[i]));
}

}  // namespace
}  // namespace fewseg
