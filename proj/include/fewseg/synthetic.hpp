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
#include <string>

#include "fewseg/dataset.hpp"

namespace fewseg {

enum class ShapeKind { circle, square, triangle, ring, cross };
inline constexpr int kShapeKinds = 5;
enum class FillStyle { solid, stripes, checker, dots };
inline constexpr int kFillStyles = 4;

struct SyntheticOptions {
  int n_classes = 30;
  std::uint64_t seed = 0;
  int images_per_class = kPairsPerClass;
  // Probability that an image also carries one shape of another kind
  // (unmasked) as a distractor.
  double distractor_probability = 0.0;
};

struct SyntheticClass {
  std::string name;
  ShapeKind shape;
  FillStyle fill;
  int style_index;
};

// Class c uses shape kind c % 5 and style c / 5.
SyntheticClass synthetic_class(int index);
std::string superclass_name(int index);

// Renders one image and its exact mask.
ImageMaskPair render_synthetic_pair(const SyntheticClass& cls, std::uint64_t seed, int image_index,
                                    double distractor_probability = 0.0);

// Writes `<out>/<class>/<k>.jpg|png` plus `hierarchy.json` with at most 12
// superclasses, and returns the opened registry.
DatasetRegistry build_synthetic_dataset(const SyntheticOptions& options, const std::string& out_path);

}  // namespace fewseg
