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
#include <span>
#include <string>
#include <vector>

#include "fewseg/dataset.hpp"
#include "fewseg/objectives.hpp"
#include "fewseg/tensor.hpp"

namespace fewseg {

// Support images carry their mask as a fourth channel; queries carry zeros.
inline constexpr int kInputChannels = 4;

struct EncoderConfig {
  int n_stages = 4;
  int base_channels = 16;
  int channel_growth = 2;
  int convs_per_stage = 2;
  int max_channels = 0;  // 0: uncapped

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  int relation_channels = 0;  // 0: same as the deepest encoder stage
  int input_size = kImageSide;

  void check() const;
  int stage_channels(int stage) const;  // stage in 1..n_stages
  int relation_width() const;
  int decoder_channels(int block) const;  // block in 1..n_stages
  int deepest_side() const { return input_size >> encoder.n_stages; }

  static ModelConfig desk();       // 4 stages, 16 base channels
  static ModelConfig vgg16_like(); // 5 stages up to 512 channels

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;

  friend bool operator==(const ParamArray&, const ParamArray&) = default;
};

// Weights of the encoder (theta), relation module (phi) and decoder (omega).
template <typename T>
struct ModelParams {
  ModelConfig config;
  std::vector<ParamArray<T>> encoder;
  std::vector<ParamArray<T>> relation;
  std::vector<ParamArray<T>> decoder;

  template <typename F>
  void for_each(F&& f) {
    for (auto& a : encoder) f(a);
    for (auto& a : relation) f(a);
    for (auto& a : decoder) f(a);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& a : encoder) f(a);
    for (const auto& a : relation) f(a);
    for (const auto& a : decoder) f(a);
  }

  std::size_t count() const;
  bool all_finite() const;
  ModelParams zeros_like() const;
  const ParamArray<T>& find(const std::string& name) const;
  ParamArray<T>& find(const std::string& name);

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    auto conv = [](const std::vector<ParamArray<T>>& src, std::vector<ParamArray<U>>& dst) {
      for (const auto& a : src) dst.push_back({a.name, a.shape, std::vector<U>(a.values.begin(), a.values.end())});
    };
    conv(encoder, out.encoder);
    conv(relation, out.relation);
    conv(decoder, out.decoder);
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// He-scaled normal weights, zero biases; deterministic per seed.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct FeatureMap {
  int stage = 0;
  Tensor<T> grid;
};

template <typename T>
using FeatureStack = std::vector<FeatureMap<T>>;  // stage 1 first, deepest last

template <typename T>
Tensor<T> support_input(const ImageMaskPair& pair);
template <typename T>
Tensor<T> query_input(const ColorImage& image);

// Per-stage arithmetic mean over the supports.
template <typename T>
FeatureStack<T> fuse_supports(std::span<const FeatureStack<T>> supports);

// Encoder -> relation -> decoder network. Stateless; all weights come in
// through ModelParams.
template <typename T>
class Network {
 public:
  struct StageTrace {
    std::vector<Tensor<T>> conv_out;  // post-ReLU
    std::vector<std::uint8_t> argmax;
    Tensor<T> pooled;
  };
  struct EncoderTrace {
    Tensor<T> input;
    std::vector<StageTrace> stages;
    FeatureStack<T> maps() const;
  };
  struct RelationTrace {
    Tensor<T> combined;  // support channels then query channels
    Tensor<T> hidden;    // after the first 1x1 layer + ReLU
    Tensor<T> out;       // after the second 1x1 layer + ReLU
  };
  struct DecoderTrace {
    std::vector<Tensor<T>> block_in;   // upsampled | support skip | query skip
    std::vector<Tensor<T>> block_out;  // post-ReLU
    Tensor<T> logits;                  // 1 x S x S
  };

  explicit Network(ModelConfig config);
  const ModelConfig& config() const { return config_; }

  EncoderTrace encode_traced(const ModelParams<T>& params, const Tensor<T>& input) const;
  FeatureStack<T> encode(const ModelParams<T>& params, const Tensor<T>& input) const;
  RelationTrace relate(const ModelParams<T>& params, const Tensor<T>& support_deep, const Tensor<T>& query_deep) const;
  DecoderTrace decode_traced(const ModelParams<T>& params, const Tensor<T>& relation_map,
                             const FeatureStack<T>& support_skips, const FeatureStack<T>& query_skips) const;
  Prediction decode(const ModelParams<T>& params, const Tensor<T>& relation_map, const FeatureStack<T>& support_skips,
                    const FeatureStack<T>& query_skips) const;

  // Raw logits (1 x S x S) for one query given encoded supports.
  Tensor<T> logits(const ModelParams<T>& params, std::span<const Tensor<T>> supports, const Tensor<T>& query) const;
  Prediction forward(const ModelParams<T>& params, std::span<const Tensor<T>> supports, const Tensor<T>& query) const;
  Prediction forward(const ModelParams<T>& params, std::span<const ImageMaskPair> supports,
                     const ColorImage& query) const;

  struct LossGradient {
    double loss = 0.0;  // mean over queries
    ModelParams<T> grad;
    std::vector<Prediction> predictions;
  };
  // Loss and its exact parameter gradient for one episode.
  LossGradient loss_and_gradient(const ModelParams<T>& params, std::span<const Tensor<T>> supports,
                                 std::span<const Tensor<T>> queries, std::span<const Mask> truths,
                                 LossKind kind) const;

 private:
  void encoder_backward(const ModelParams<T>& params, const EncoderTrace& trace, std::vector<Tensor<T>> dmaps,
                        ModelParams<T>& grad) const;

  ModelConfig config_;
};

template <typename T>
Prediction to_prediction(const Tensor<T>& logits);

// Union of binary tasks: argmax over class probabilities where the best
// reaches 0.5, else background (0). Class ids start at 1.
Grid<std::int32_t> combine_class_probabilities(std::span<const Prediction> per_class, double tau = 0.5);

template <typename T>
Grid<std::int32_t> multiway_segment(const Network<T>& net, const ModelParams<T>& params,
                                    std::span<const std::vector<ImageMaskPair>> per_class_supports,
                                    const ColorImage& query);

}  // namespace fewseg
