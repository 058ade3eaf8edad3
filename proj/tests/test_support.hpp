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

#pragma once

// Shared fixture builders for the unit tests and the acceptance runner.

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fewseg/dataset.hpp"
#include "fewseg/hierarchy.hpp"
#include "fewseg/image.hpp"
#include "fewseg/model.hpp"

namespace fewseg::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fewseg-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// Plain image with an axis-aligned foreground rectangle in the centre.
inline void write_raw_pair(const std::filesystem::path& dir, int k, int width, int height,
                           std::uint8_t fg = 255) {
  RgbImage8 img(height, width);
  Grid<std::uint8_t> mask(height, width, 0);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      std::uint8_t* p = img.px(r, c);
      p[0] = static_cast<std::uint8_t>((r * 7 + c * 3 + k * 11) % 256);
      p[1] = static_cast<std::uint8_t>((r + c) % 256);
      p[2] = static_cast<std::uint8_t>((k * 40) % 256);
      if (r >= height / 4 && r < 3 * height / 4 && c >= width / 4 && c < 3 * width / 4) mask.at(r, c) = fg;
    }
  write_rgb((dir / (std::to_string(k) + ".jpg")).string(), img);
  write_gray((dir / (std::to_string(k) + ".png")).string(), mask);
}

// Twelve top-level nodes, three middle nodes, three classes of ten pairs:
// passes every collection rule with no warnings.
inline void write_conforming_fixture(const std::filesystem::path& root) {
  HierarchyGraph h;
  for (int t = 0; t < 12; ++t) h.add_node("top-" + std::to_string(t), Level::top);
  const std::vector<std::string> classes = {"apple", "bus", "cat"};
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string mid = "mid-" + std::to_string(i);
    h.add_node(mid, Level::middle, {"top-" + std::to_string(i)});
    h.add_node(classes[i], Level::bottom, {mid});
    std::filesystem::create_directories(root / classes[i]);
    for (int k = 1; k <= 10; ++k) write_raw_pair(root / classes[i], k, 240, 232);
  }
  h.save_json((root / "hierarchy.json").string());
}

// One collection-rule violation applied to a conforming fixture.
struct ViolationFixture {
  std::string name;
  std::set<std::string> expected_errors;
};

inline std::vector<ViolationFixture> violation_fixtures() {
  return {{"conforming", {}},
          {"aspect-2.5", {"aspect-ratio"}},
          {"min-side-200", {"min-side"}},
          {"nine-images", {"class-cardinality"}},
          {"non-binary-mask", {"mask-nonbinary"}},
          {"instance-label-11", {"instance-range"}},
          {"cyclic-hierarchy", {"hierarchy-cycle"}}};
}

inline void write_violation_fixture(const std::filesystem::path& root, const std::string& name) {
  write_conforming_fixture(root);
  const std::filesystem::path apple = root / "apple";
  if (name == "aspect-2.5") {
    write_raw_pair(apple, 1, 560, 224);
  } else if (name == "min-side-200") {
    write_raw_pair(apple, 1, 200, 300);
  } else if (name == "nine-images") {
    std::filesystem::remove(apple / "10.jpg");
    std::filesystem::remove(apple / "10.png");
  } else if (name == "non-binary-mask") {
    Grid<std::uint8_t> mask = read_gray((apple / "1.png").string());
    for (int c = 0; c < mask.cols; ++c) mask.at(0, c) = 128;
    write_gray((apple / "1.png").string(), mask);
  } else if (name == "instance-label-11") {
    LabelMap inst(232, 240, 0);
    inst.at(100, 100) = 3;
    inst.at(120, 120) = 11;
    write_labels((apple / "1.inst.png").string(), inst);
  } else if (name == "cyclic-hierarchy") {
    const std::string path = (root / "hierarchy.json").string();
    HierarchyGraph h = HierarchyGraph::load_json(path);
    h.add_node("loop-a", Level::middle, {"loop-b", "top-5"});
    h.add_node("loop-b", Level::middle, {"loop-a"});
    h.save_json(path);
  } else if (name != "conforming") {
    throw std::invalid_argument("unknown fixture " + name);
  }
}

// Random tensor with entries in [lo, hi).
template <typename T>
Tensor<T> random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

// Support tensor: random colour planes and a binary fourth channel with at
// least one foreground pixel.
template <typename T>
Tensor<T> random_support(int side, std::mt19937_64& rng) {
  Tensor<T> t = random_tensor<T>(kInputChannels, side, side, rng);
  std::bernoulli_distribution b(0.4);
  T* m = t.channel(3);
  for (std::size_t i = 0; i < t.plane(); ++i) m[i] = b(rng) ? T{1} : T{0};
  m[0] = T{1};
  return t;
}

template <typename T>
Tensor<T> random_query(int side, std::mt19937_64& rng) {
  Tensor<T> t = random_tensor<T>(kInputChannels, side, side, rng);
  std::fill(t.channel(3), t.channel(3) + t.plane(), T{0});
  return t;
}

inline Mask random_mask(int rows, int cols, std::mt19937_64& rng, double p = 0.4) {
  Mask m(rows, cols);
  std::bernoulli_distribution b(p);
  for (auto& v : m.values) v = b(rng) ? 1 : 0;
  return m;
}

// Two stages, four base channels: small enough for exhaustive checks.
inline ModelConfig tiny_config(int input_size) {
  ModelConfig c;
  c.encoder = {2, 4, 2, 2, 0};
  c.input_size = input_size;
  return c;
}

}  // namespace fewseg::testing
