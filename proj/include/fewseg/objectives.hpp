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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "fewseg/hierarchy.hpp"
#include "fewseg/image.hpp"

namespace fewseg {

enum class LossKind { bce, mse };
const char* to_string(LossKind kind);
std::optional<LossKind> parse_loss_kind(const std::string& text);

// Logits are clamped to +-15 before the sigmoid so probabilities stay
// strictly inside (0, 1) even in single precision.
inline constexpr double kLogitClamp = 15.0;

template <typename T>
T clamped_sigmoid(T z) {
  z = std::clamp(z, static_cast<T>(-kLogitClamp), static_cast<T>(kLogitClamp));
  return T{1} / (T{1} + std::exp(-z));
}

// Per-pixel foreground probability over a query image.
struct Prediction {
  Grid<float> probs;
};

struct LossValue {
  double value = 0.0;
  bool per_pixel_mean = true;
};

// Pixel-mean binary cross entropy.
LossValue bce_loss(const Prediction& pred, const Mask& truth);
// Pixel-mean squared error.
LossValue mse_loss(const Prediction& pred, const Mask& truth);
LossValue compute_loss(LossKind kind, const Prediction& pred, const Mask& truth);

// 1 where prob >= tau.
Mask threshold_mask(const Prediction& pred, double tau = 0.5);

// Intersection over union of the positive labels; two empty masks give 1.
double iou(const Mask& pred, const Mask& truth);

// Loss of sigmoid(clamp(logits)) against `truth`, pixel-mean, times `scale`.
// Writes d(loss)/d(logit) into `dlogits`. The clamp is passed straight
// through in the gradient so saturated pixels keep learning.
template <typename T>
double logit_loss(std::span<const T> logits, const Mask& truth, LossKind kind, std::span<T> dlogits,
                  double scale = 1.0) {
  using W = std::common_type_t<T, double>;
  const std::size_t n = logits.size();
  const W inv_n = static_cast<W>(scale) / static_cast<W>(n);
  W total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const W p = clamped_sigmoid(static_cast<W>(logits[i]));
    const W y = truth.values[i];
    if (kind == LossKind::bce) {
      total += y != 0 ? -std::log(p) : -std::log1p(-p);
      dlogits[i] = static_cast<T>((p - y) * inv_n);
    } else {
      total += (p - y) * (p - y);
      dlogits[i] = static_cast<T>(2 * (p - y) * p * (1 - p) * inv_n);
    }
  }
  return static_cast<double>(total * inv_n);
}

struct IouRecord {
  std::string class_name;
  double iou = 0.0;
};

struct MetricsReport {
  struct Row {
    std::string name;
    std::size_t n = 0;
    double mean_iou = 0.0;
  };
  std::vector<Row> classes;       // mean over that class's records
  std::vector<Row> superclasses;  // mean over member classes' means
  Row global;                     // macro: mean over class means
  Row global_micro;               // mean over all records
  std::map<std::string, std::string> metadata;

  const Row& class_row(const std::string& name) const;
  const Row& superclass_row(const std::string& name) const;
  // `level,name,n,mean_iou`; the micro row is emitted when asked for.
  void write_csv(std::ostream& out, bool include_micro = false) const;
};

MetricsReport mean_iou(std::span<const IouRecord> records, const HierarchyGraph& hierarchy);

}  // namespace fewseg
