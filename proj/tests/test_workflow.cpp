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


#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fewseg/error.hpp"
#include "fewseg/synthetic.hpp"
#include "fewseg/workflow.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace fewseg {
namespace {

using testing::TempDir;

// Truth is the first ten pixels of a 10x10 grid; the label covers `hits` of them.
AutoLabel label_with_hits(int hits, const std::string& path) {
  AutoLabel a;
  a.image_path = path;
  a.mask = Mask(10, 10, 0);
  for (int i = 0; i < hits; ++i) a.mask.values[i] = 1;
  return a;
}

Mask ten_pixel_truth() {
  Mask m(10, 10, 0);
  for (int i = 0; i < 10; ++i) m.values[i] = 1;
  return m;
}

AutoLabel label_with_prob(float p, const std::string& path) {
  AutoLabel a;
  a.image_path = path;
  a.prediction.probs = Grid<float>(4, 4, p);
  a.mask = threshold_mask(a.prediction);
  return a;
}

TEST(MineHardCases, AscendingIou) {
  std::vector<AutoLabel> labels = {label_with_hits(9, "a"), label_with_hits(2, "b"), label_with_hits(5, "c")};
  std::vector<Mask> truths(3, ten_pixel_truth());
  auto cases = mine_hard_cases(labels, std::span<const Mask>(truths), 2);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[0].index, 1u);
  EXPECT_EQ(cases[1].index, 2u);
  EXPECT_DOUBLE_EQ(cases[0].score, 0.2);
  EXPECT_DOUBLE_EQ(cases[1].score, 0.5);
  EXPECT_EQ(cases[0].image_path, "b");
  EXPECT_EQ(cases[0].predicted, labels[1].mask);

  EXPECT_TRUE(mine_hard_cases(labels, std::span<const Mask>(truths), 0).empty());
  EXPECT_EQ(mine_hard_cases(labels, std::span<const Mask>(truths), 10).size(), 3u);
}

TEST(MineHardCases, MarginWithoutTruth) {
  std::vector<AutoLabel> labels = {label_with_prob(0.95f, "confident"), label_with_prob(0.55f, "unsure")};
  auto cases = mine_hard_cases(labels, std::nullopt, 2);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[0].index, 1u);
  EXPECT_NEAR(cases[0].score, 0.05, 1e-6);
  EXPECT_NEAR(cases[1].score, 0.45, 1e-6);
  for (const auto& c : cases) {
    EXPECT_GE(c.score, 0.0);
    EXPECT_LE(c.score, 1.0);
  }
}

TEST(MineHardCases, TiesBreakByIndex) {
  std::vector<AutoLabel> labels;
  for (int i = 0; i < 6; ++i) labels.push_back(label_with_hits(i % 2 ? 3 : 7, std::to_string(i)));
  std::vector<Mask> truths(6, ten_pixel_truth());
  auto cases = mine_hard_cases(labels, std::span<const Mask>(truths), 6);
  std::vector<std::size_t> order;
  for (const auto& c : cases) order.push_back(c.index);
  EXPECT_EQ(order, (std::vector<std::size_t>{1, 3, 5, 0, 2, 4}));
}

TEST(MineHardCases, TruthCountMismatch) {
  std::vector<AutoLabel> labels = {label_with_hits(1, "a"), label_with_hits(2, "b")};
  std::vector<Mask> truths(1, ten_pixel_truth());
  EXPECT_THROW(mine_hard_cases(labels, std::span<const Mask>(truths), 1), InvalidArgument);
}

TEST(MineHardCases, ManifestCsv) {
  std::vector<AutoLabel> labels = {label_with_hits(9, "a.png"), label_with_hits(2, "b.png")};
  std::vector<Mask> truths(2, ten_pixel_truth());
  auto cases = mine_hard_cases(labels, std::span<const Mask>(truths), 2);
  std::ostringstream out;
  write_hard_case_manifest(cases, out);
  EXPECT_EQ(out.str(), "rank,image_path,score\n1,b.png,0.20000000000000001\n2,a.png,0.90000000000000002\n");
}

std::vector<ImageMaskPair> synthetic_pairs(int class_index, int first, int count) {
  std::vector<ImageMaskPair> out;
  for (int i = first; i < first + count; ++i) {
    ImageMaskPair p = render_synthetic_pair(synthetic_class(class_index), 3, i);
    p.source_path = "/corpus/" + std::to_string(i) + ".png";
    out.push_back(std::move(p));
  }
  return out;
}

TEST(MergeSupportSet, UnionAndVersion) {
  SupportSet v1 = SupportSet::initial(synthetic_pairs(1, 0, 5));
  EXPECT_EQ(v1.version, 1);
  auto corrected = synthetic_pairs(1, 5, 3);
  SupportSet v2 = merge_support_set(v1, corrected);
  EXPECT_EQ(v2.version, 2);
  ASSERT_EQ(v2.pairs.size(), 8u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(v2.provenance[i], Provenance::initial);
  for (int i = 5; i < 8; ++i) EXPECT_EQ(v2.provenance[i], Provenance::corrected);
  EXPECT_EQ(v1.pairs.size(), 5u);

  SupportSet v3 = merge_support_set(v2, synthetic_pairs(1, 9, 1));
  EXPECT_EQ(v3.version, 3);
}

TEST(MergeSupportSet, DuplicatePathIsReplaced) {
  SupportSet v1 = SupportSet::initial(synthetic_pairs(1, 0, 5));
  ImageMaskPair fix = synthetic_pairs(2, 7, 1)[0];
  fix.source_path = v1.pairs[2].source_path;
  SupportSet v2 = merge_support_set(v1, std::vector<ImageMaskPair>{fix});
  EXPECT_EQ(v2.version, 2);
  ASSERT_EQ(v2.pairs.size(), 5u);
  EXPECT_EQ(v2.pairs[2].mask, fix.mask);
  EXPECT_EQ(v2.provenance[2], Provenance::corrected);
  EXPECT_EQ(v2.provenance[1], Provenance::initial);
}

TEST(MergeSupportSet, Errors) {
  SupportSet v1 = SupportSet::initial(synthetic_pairs(1, 0, 2));
  EXPECT_THROW(merge_support_set(v1, {}), InvalidArgument);
  ImageMaskPair empty = synthetic_pairs(1, 4, 1)[0];
  std::fill(empty.mask.values.begin(), empty.mask.values.end(), 0);
  EXPECT_THROW(merge_support_set(v1, std::vector<ImageMaskPair>{empty}), DataError);
  ImageMaskPair small = empty;
  small.mask = Mask(10, 10, 1);
  EXPECT_THROW(merge_support_set(v1, std::vector<ImageMaskPair>{small}), DataError);
}

TEST(SupportManifest, RoundTrip) {
  TempDir dir("manifest");
  SupportSet set = merge_support_set(SupportSet::initial(synthetic_pairs(4, 0, 2)), synthetic_pairs(4, 2, 1));
  std::vector<std::string> masks;
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    const std::string img = (dir.path() / (std::to_string(i) + ".png")).string();
    const std::string mask = std::to_string(i) + ".mask.png";
    write_pair(set.pairs[i], img, (dir.path() / mask).string());
    set.pairs[i].source_path = img;
    masks.push_back(mask);
  }
  const std::string path = (dir.path() / "support.txt").string();
  save_support_manifest(set, masks, path);
  SupportSet back = load_support_manifest(path);
  EXPECT_EQ(back.version, 2);
  EXPECT_EQ(back.provenance, set.provenance);
  ASSERT_EQ(back.pairs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.pairs[i].mask, set.pairs[i].mask);
}

TEST(RedOverlay, TintsForegroundOnly) {
  ColorImage img(1, 2);
  for (int c = 0; c < 3; ++c) {
    img.at(c, 0, 0) = 100.0f / 255.0f;
    img.at(c, 0, 1) = 100.0f / 255.0f;
  }
  Mask m(1, 2, 0);
  m.at(0, 1) = 1;
  RgbImage8 o = red_overlay(img, m);
  EXPECT_EQ(o.px(0, 0)[0], 100);
  EXPECT_EQ(o.px(0, 0)[1], 100);
  EXPECT_EQ(o.px(0, 1)[0], 178);
  EXPECT_EQ(o.px(0, 1)[1], 50);
  EXPECT_EQ(o.px(0, 1)[2], 50);
}

class Corpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("corpus");
    for (int i = 0; i < 20; ++i) {
      ImageMaskPair p = render_synthetic_pair(synthetic_class(i % 2 ? 3 : 8), 6, i);
      write_rgb((dir_->path() / ("img-" + std::to_string(100 + i) + ".png")).string(), to_rgb8(p.image));
    }
  }
  static void TearDownTestSuite() { delete dir_; }

  static Checkpoint checkpoint() {
    const ModelConfig model = testing::tiny_config(kImageSide);
    Checkpoint ck{model, {}, 0, 0, init_params<float>(model, 31), {}};
    ck.optimizer = AdamState<float>::zeros_like(ck.params);
    return ck;
  }

  static TempDir* dir_;
};
TempDir* Corpus::dir_ = nullptr;

TEST_F(Corpus, LoadsSortedDirectory) {
  auto corpus = load_corpus_dir(dir_->str());
  ASSERT_EQ(corpus.size(), 20u);
  EXPECT_EQ(fs::path(corpus.front().path).filename(), "img-100.png");
  EXPECT_EQ(corpus.front().image.rows, kImageSide);
  EXPECT_THROW(load_corpus_image((dir_->path() / "none.png").string()), Error);
}

TEST_F(Corpus, AutoLabelIsBitIdenticalAcrossRuns) {
  auto corpus = load_corpus_dir(dir_->str());
  SupportSet support = SupportSet::initial(synthetic_pairs(3, 30, 2));
  auto a = auto_label(checkpoint(), support, corpus, 1);
  auto b = auto_label(checkpoint(), support, corpus, 3);
  ASSERT_EQ(a.size(), 20u);
  ASSERT_EQ(b.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image_path, corpus[i].path);
    EXPECT_EQ(a[i].prediction.probs, b[i].prediction.probs);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].overlay, b[i].overlay);
    EXPECT_EQ(a[i].mask, threshold_mask(a[i].prediction, 0.5));
  }
}

TEST_F(Corpus, SupportImageInCorpusIsStillLabelled) {
  SupportSet support = SupportSet::initial(synthetic_pairs(3, 30, 1));
  std::vector<CorpusImage> corpus = {{"support", support.pairs[0].image}, {"other", support.pairs[0].image}};
  EXPECT_EQ(auto_label(checkpoint(), support, corpus).size(), 2u);
}

TEST_F(Corpus, Errors) {
  auto corpus = load_corpus_dir(dir_->str());
  EXPECT_THROW(auto_label(checkpoint(), SupportSet{}, corpus), InvalidArgument);
  SupportSet support = SupportSet::initial(synthetic_pairs(3, 30, 1));
  EXPECT_THROW(auto_label(checkpoint(), support, std::vector<CorpusImage>{}), InvalidArgument);
}

}  // namespace
}  // namespace fewseg
