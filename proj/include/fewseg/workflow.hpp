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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fewseg/dataset.hpp"
#include "fewseg/image.hpp"
#include "fewseg/objectives.hpp"
#include "fewseg/training.hpp"

namespace fewseg {

enum class Provenance { initial, corrected };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& text);

// Immutable, versioned support set for one novel class.
struct SupportSet {
  int version = 1;
  std::vector<ImageMaskPair> pairs;
  std::vector<Provenance> provenance;  // parallel to pairs

  static SupportSet initial(std::vector<ImageMaskPair> pairs);
  void check() const;
};

// Manifest lines `provenance<TAB>image<TAB>mask` after a `# version<TAB>n`
// line. Relative paths resolve against the manifest directory.
void save_support_manifest(const SupportSet& set, const std::vector<std::string>& mask_paths,
                           const std::string& path);
SupportSet load_support_manifest(const std::string& path);

struct CorpusImage {
  std::string path;
  ColorImage image;
};

// Applies the collection filters and resizes to the working resolution.
CorpusImage load_corpus_image(const std::string& path);
std::vector<CorpusImage> load_corpus_dir(const std::string& dir);

struct AutoLabel {
  std::string image_path;
  Prediction prediction;
  Mask mask;         // threshold 0.5
  RgbImage8 overlay;  // foreground tinted red
};

RgbImage8 red_overlay(const ColorImage& image, const Mask& mask);

// One forward pass per corpus image with the given support. Results are
// independent of `workers`.
std::vector<AutoLabel> auto_label(const Checkpoint& checkpoint, const SupportSet& support,
                                  std::span<const CorpusImage> corpus, int workers = 1);

struct HardCase {
  std::size_t index = 0;  // position in the prediction list
  std::string image_path;
  Mask predicted;
  double score = 0.0;  // IoU with truth, or mean |p - 0.5|
};

// Lowest scores first; ties by index. Returns at most n cases.
std::vector<HardCase> mine_hard_cases(std::span<const AutoLabel> predictions,
                                      std::optional<std::span<const Mask>> truths, std::size_t n);
double mean_margin(const Prediction& p);

void write_hard_case_manifest(std::span<const HardCase> cases, std::ostream& out);

// Next version: corrected pairs replace entries with the same source path
// and are appended otherwise.
SupportSet merge_support_set(const SupportSet& old, std::span<const ImageMaskPair> corrected);

}  // namespace fewseg
