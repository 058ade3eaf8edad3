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

#include <cmath>
#include <random>
#include <type_traits>

#include "fewseg/error.hpp"
#include "fewseg/layers.hpp"

namespace fewseg {

void ModelConfig::check() const {
  const auto& e = encoder;
  if (e.n_stages < 1 || e.base_channels < 1 || e.channel_growth < 1 || e.convs_per_stage < 1)
    throw InvalidArgument("model-config", "encoder counts must all be at least 1");
  if (e.max_channels < 0 || relation_channels < 0) throw InvalidArgument("model-config", "negative channel count");
  if (input_size < 1 || e.n_stages > 20 || input_size % (1 << e.n_stages) != 0)
    throw InvalidArgument("model-config", "input size " + std::to_string(input_size) + " is not divisible by 2^" +
                                              std::to_string(e.n_stages));
}

int ModelConfig::stage_channels(int stage) const {
  long c = encoder.base_channels;
  for (int s = 1; s < stage; ++s) {
    c *= encoder.channel_growth;
    if (encoder.max_channels > 0 && c >= encoder.max_channels) return encoder.max_channels;
  }
  if (encoder.max_channels > 0) c = std::min<long>(c, encoder.max_channels);
  return static_cast<int>(c);
}

int ModelConfig::relation_width() const {
  return relation_channels > 0 ? relation_channels : stage_channels(encoder.n_stages);
}

int ModelConfig::decoder_channels(int block) const {
  const int n = encoder.n_stages;
  return block < n ? stage_channels(n - block) : encoder.base_channels;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::vgg16_like() {
  ModelConfig c;
  c.encoder = {5, 64, 2, 3, 512};
  return c;
}

namespace {

template <typename T>
ParamArray<T> make_array(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return {std::move(name), std::move(shape), std::vector<T>(n, T{0})};
}

std::string stage_name(const char* prefix, int a, const char* mid, int b, const char* suffix) {
  return std::string(prefix) + std::to_string(a) + mid + std::to_string(b) + suffix;
}

template <typename T>
ModelParams<T> param_layout(const ModelConfig& config) {
  config.check();
  ModelParams<T> p;
  p.config = config;
  const int n = config.encoder.n_stages, cps = config.encoder.convs_per_stage;
  int in = kInputChannels;
  for (int s = 1; s <= n; ++s) {
    const int out = config.stage_channels(s);
    for (int j = 1; j <= cps; ++j) {
      p.encoder.push_back(make_array<T>(stage_name("enc.s", s, ".c", j, ".w"), {out, in, 3, 3}));
      p.encoder.push_back(make_array<T>(stage_name("enc.s", s, ".c", j, ".b"), {out}));
      in = out;
    }
  }
  const int deep = config.stage_channels(n), r = config.relation_width();
  p.relation.push_back(make_array<T>("rel.c1.w", {r, 2 * deep, 1, 1}));
  p.relation.push_back(make_array<T>("rel.c1.b", {r}));
  p.relation.push_back(make_array<T>("rel.c2.w", {r, r, 1, 1}));
  p.relation.push_back(make_array<T>("rel.c2.b", {r}));
  int prev = r;
  for (int b = 1; b <= n; ++b) {
    const int skip = b < n ? 2 * config.stage_channels(n - b) : 0;
    const int out = config.decoder_channels(b);
    p.decoder.push_back(make_array<T>("dec.u" + std::to_string(b) + ".w", {out, prev + skip, 3, 3}));
    p.decoder.push_back(make_array<T>("dec.u" + std::to_string(b) + ".b", {out}));
    prev = out;
  }
  p.decoder.push_back(make_array<T>("dec.head.w", {1, prev, 1, 1}));
  p.decoder.push_back(make_array<T>("dec.head.b", {1}));
  return p;
}

template <typename T>
std::span<const T> values(const ParamArray<T>& a) {
  return {a.values.data(), a.values.size()};
}
template <typename T>
std::span<T> values(ParamArray<T>& a) {
  return {a.values.data(), a.values.size()};
}

template <typename T>
void check_input(const ModelConfig& config, const Tensor<T>& x) {
  if (x.channels != kInputChannels || x.height != config.input_size || x.width != config.input_size)
    throw InvalidArgument("shape-mismatch", "network input must be " + std::to_string(kInputChannels) + "x" +
                                                std::to_string(config.input_size) + "x" +
                                                std::to_string(config.input_size));
}

}  // namespace

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  for_each([&](const ParamArray<T>& a) { n += a.values.size(); });
  return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  bool ok = true;
  for_each([&](const ParamArray<T>& a) {
    for (T v : a.values) ok = ok && std::isfinite(v);
  });
  return ok;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> z = *this;
  z.for_each([](ParamArray<T>& a) { std::fill(a.values.begin(), a.values.end(), T{0}); });
  return z;
}

template <typename T>
const ParamArray<T>& ModelParams<T>::find(const std::string& name) const {
  const ParamArray<T>* hit = nullptr;
  for_each([&](const ParamArray<T>& a) {
    if (a.name == name) hit = &a;
  });
  if (!hit) throw InvalidArgument("unknown-param", "no parameter named " + name);
  return *hit;
}

template <typename T>
ParamArray<T>& ModelParams<T>::find(const std::string& name) {
  return const_cast<ParamArray<T>&>(std::as_const(*this).find(name));
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> p = param_layout<T>(config);
  std::mt19937_64 rng(seed);
  p.for_each([&](ParamArray<T>& a) {
    if (a.shape.size() != 4) return;  // biases stay zero
    const double fan_in = static_cast<double>(a.shape[1]) * a.shape[2] * a.shape[3];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : a.values) v = static_cast<T>(normal(rng));
  });
  // The sigmoid head gets a plain fan-in scale; no ReLU follows it.
  auto& head = p.find("dec.head.w");
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / head.shape[1]));
  for (auto& v : head.values) v = static_cast<T>(normal(rng));
  return p;
}

template <typename T>
Tensor<T> support_input(const ImageMaskPair& pair) {
  const auto& img = pair.image;
  if (!(pair.mask.rows == img.rows && pair.mask.cols == img.cols))
    throw InvalidArgument("shape-mismatch", "support mask and image differ in size");
  Tensor<T> x(kInputChannels, img.rows, img.cols);
  const std::size_t n = img.plane_size();
  for (std::size_t i = 0; i < 3 * n; ++i) x.data[i] = static_cast<T>(img.planes[i]);
  for (std::size_t i = 0; i < n; ++i) x.data[3 * n + i] = static_cast<T>(pair.mask.values[i]);
  return x;
}

template <typename T>
Tensor<T> query_input(const ColorImage& image) {
  Tensor<T> x(kInputChannels, image.rows, image.cols);
  for (std::size_t i = 0; i < 3 * image.plane_size(); ++i) x.data[i] = static_cast<T>(image.planes[i]);
  return x;
}

template <typename T>
FeatureStack<T> fuse_supports(std::span<const FeatureStack<T>> supports) {
  if (supports.empty()) throw InvalidArgument("empty-support", "need at least one support");
  const auto& first = supports.front();
  for (const auto& s : supports) {
    if (s.size() != first.size()) throw InvalidArgument("shape-mismatch", "support stacks differ in depth");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!s[i].grid.same_shape(first[i].grid) || s[i].stage != first[i].stage)
        throw InvalidArgument("shape-mismatch", "support feature maps differ in shape");
  }
  // Sum in a wider type, then divide: K equal inputs give back the input
  // exactly (for K up to 2^11) whatever the order.
  using Acc = std::conditional_t<(sizeof(T) < sizeof(double)), double, long double>;
  const Acc k = static_cast<Acc>(supports.size());
  FeatureStack<T> out;
  for (std::size_t i = 0; i < first.size(); ++i) {
    FeatureMap<T> fused{first[i].stage, Tensor<T>(first[i].grid.channels, first[i].grid.height, first[i].grid.width)};
    for (std::size_t e = 0; e < fused.grid.size(); ++e) {
      Acc acc = 0;
      for (const auto& s : supports) acc += static_cast<Acc>(s[i].grid.data[e]);
      fused.grid.data[e] = static_cast<T>(acc / k);
    }
    out.push_back(std::move(fused));
  }
  return out;
}

template <typename T>
FeatureStack<T> Network<T>::EncoderTrace::maps() const {
  FeatureStack<T> out;
  for (std::size_t s = 0; s < stages.size(); ++s) out.push_back({static_cast<int>(s) + 1, stages[s].pooled});
  return out;
}

template <typename T>
Network<T>::Network(ModelConfig config) : config_(config) {
  config_.check();
}

template <typename T>
typename Network<T>::EncoderTrace Network<T>::encode_traced(const ModelParams<T>& params,
                                                            const Tensor<T>& input) const {
  check_input(config_, input);
  const int n = config_.encoder.n_stages, cps = config_.encoder.convs_per_stage;
  EncoderTrace tr;
  tr.input = input;
  tr.stages.resize(n);
  const Tensor<T>* x = &tr.input;
  for (int s = 0; s < n; ++s) {
    auto& st = tr.stages[s];
    const int out = config_.stage_channels(s + 1);
    for (int j = 0; j < cps; ++j) {
      const auto& w = params.encoder[2 * (s * cps + j)];
      const auto& b = params.encoder[2 * (s * cps + j) + 1];
      st.conv_out.push_back(nn::conv2d(*x, values(w), values(b), out, 3));
      nn::relu_inplace(st.conv_out.back());
      x = &st.conv_out.back();
    }
    st.pooled = nn::maxpool2(*x, st.argmax);
    x = &st.pooled;
  }
  return tr;
}

template <typename T>
FeatureStack<T> Network<T>::encode(const ModelParams<T>& params, const Tensor<T>& input) const {
  return encode_traced(params, input).maps();
}

template <typename T>
typename Network<T>::RelationTrace Network<T>::relate(const ModelParams<T>& params, const Tensor<T>& support_deep,
                                                      const Tensor<T>& query_deep) const {
  if (!support_deep.same_shape(query_deep))
    throw InvalidArgument("shape-mismatch", "support and query maps differ in shape");
  if (support_deep.channels * 2 != params.relation[0].shape[1])
    throw InvalidArgument("shape-mismatch", "relation input depth does not match parameters");
  const int r = config_.relation_width();
  RelationTrace tr;
  tr.combined = nn::concat_channels({&support_deep, &query_deep});
  tr.hidden = nn::conv2d(tr.combined, values(params.relation[0]), values(params.relation[1]), r, 1);
  nn::relu_inplace(tr.hidden);
  tr.out = nn::conv2d(tr.hidden, values(params.relation[2]), values(params.relation[3]), r, 1);
  nn::relu_inplace(tr.out);
  return tr;
}

template <typename T>
typename Network<T>::DecoderTrace Network<T>::decode_traced(const ModelParams<T>& params,
                                                            const Tensor<T>& relation_map,
                                                            const FeatureStack<T>& support_skips,
                                                            const FeatureStack<T>& query_skips) const {
  const int n = config_.encoder.n_stages;
  if (static_cast<int>(support_skips.size()) < n - 1 || static_cast<int>(query_skips.size()) < n - 1)
    throw InvalidArgument("missing-skip", "decoder needs a skip map for every encoder stage");
  if (relation_map.height != config_.deepest_side() || relation_map.width != config_.deepest_side())
    throw InvalidArgument("shape-mismatch", "relation map is not at the deepest resolution");
  DecoderTrace tr;
  const Tensor<T>* x = &relation_map;
  for (int b = 1; b <= n; ++b) {
    Tensor<T> up = nn::upsample2(*x);
    if (b < n) {
      const auto& ss = support_skips[n - b - 1].grid;
      const auto& qs = query_skips[n - b - 1].grid;
      if (ss.height != up.height || qs.height != up.height)
        throw InvalidArgument("shape-mismatch", "skip map resolution does not match decoder block");
      tr.block_in.push_back(nn::concat_channels({&up, &ss, &qs}));
    } else {
      tr.block_in.push_back(std::move(up));
    }
    const auto& w = params.decoder[2 * (b - 1)];
    const auto& bias = params.decoder[2 * (b - 1) + 1];
    tr.block_out.push_back(nn::conv2d(tr.block_in.back(), values(w), values(bias), config_.decoder_channels(b), 3));
    nn::relu_inplace(tr.block_out.back());
    x = &tr.block_out.back();
  }
  tr.logits = nn::conv2d(*x, values(params.decoder[2 * n]), values(params.decoder[2 * n + 1]), 1, 1);
  return tr;
}

template <typename T>
Prediction to_prediction(const Tensor<T>& logits) {
  Prediction p;
  p.probs = Grid<float>(logits.height, logits.width);
  for (std::size_t i = 0; i < p.probs.size(); ++i)
    p.probs.values[i] = static_cast<float>(clamped_sigmoid(static_cast<double>(logits.data[i])));
  return p;
}

template <typename T>
Prediction Network<T>::decode(const ModelParams<T>& params, const Tensor<T>& relation_map,
                              const FeatureStack<T>& support_skips, const FeatureStack<T>& query_skips) const {
  return to_prediction(decode_traced(params, relation_map, support_skips, query_skips).logits);
}

template <typename T>
Tensor<T> Network<T>::logits(const ModelParams<T>& params, std::span<const Tensor<T>> supports,
                             const Tensor<T>& query) const {
  std::vector<FeatureStack<T>> encoded;
  for (const auto& s : supports) encoded.push_back(encode(params, s));
  FeatureStack<T> fused = fuse_supports<T>(encoded);
  FeatureStack<T> q = encode(params, query);
  RelationTrace rel = relate(params, fused.back().grid, q.back().grid);
  return decode_traced(params, rel.out, fused, q).logits;
}

template <typename T>
Prediction Network<T>::forward(const ModelParams<T>& params, std::span<const Tensor<T>> supports,
                               const Tensor<T>& query) const {
  return to_prediction(logits(params, supports, query));
}

template <typename T>
Prediction Network<T>::forward(const ModelParams<T>& params, std::span<const ImageMaskPair> supports,
                               const ColorImage& query) const {
  std::vector<Tensor<T>> inputs;
  for (const auto& s : supports) inputs.push_back(support_input<T>(s));
  return forward(params, std::span<const Tensor<T>>(inputs), query_input<T>(query));
}

template <typename T>
void Network<T>::encoder_backward(const ModelParams<T>& params, const EncoderTrace& trace,
                                  std::vector<Tensor<T>> dmaps, ModelParams<T>& grad) const {
  const int n = config_.encoder.n_stages, cps = config_.encoder.convs_per_stage;
  for (int s = n - 1; s >= 0; --s) {
    const auto& st = trace.stages[s];
    const Tensor<T>& pre_pool = st.conv_out.back();
    Tensor<T> d = nn::maxpool2_backward(dmaps[s], st.argmax, pre_pool.height, pre_pool.width);
    const int out = config_.stage_channels(s + 1);
    for (int j = cps - 1; j >= 0; --j) {
      nn::relu_backward(st.conv_out[j], d);
      const Tensor<T>& in = j > 0 ? st.conv_out[j - 1] : (s > 0 ? trace.stages[s - 1].pooled : trace.input);
      const std::size_t wi = 2 * (s * cps + j);
      const bool need_dx = !(s == 0 && j == 0);
      Tensor<T> dx;
      nn::conv2d_backward(in, values(params.encoder[wi]), out, 3, d, values(grad.encoder[wi]),
                          values(grad.encoder[wi + 1]), need_dx ? &dx : nullptr);
      if (!need_dx) break;
      if (j > 0) {
        d = std::move(dx);
      } else {
        nn::add_into(dmaps[s - 1], dx);
      }
    }
  }
}

template <typename T>
typename Network<T>::LossGradient Network<T>::loss_and_gradient(const ModelParams<T>& params,
                                                                std::span<const Tensor<T>> supports,
                                                                std::span<const Tensor<T>> queries,
                                                                std::span<const Mask> truths, LossKind kind) const {
  if (supports.empty()) throw InvalidArgument("empty-support", "need at least one support");
  if (queries.empty() || queries.size() != truths.size())
    throw InvalidArgument("shape-mismatch", "need one truth mask per query");
  const int n = config_.encoder.n_stages;

  std::vector<EncoderTrace> support_traces;
  std::vector<FeatureStack<T>> support_maps;
  for (const auto& s : supports) {
    support_traces.push_back(encode_traced(params, s));
    support_maps.push_back(support_traces.back().maps());
  }
  FeatureStack<T> fused = fuse_supports<T>(support_maps);

  LossGradient result;
  result.grad = params.zeros_like();
  std::vector<Tensor<T>> dfused;
  for (const auto& f : fused) dfused.emplace_back(f.grid.channels, f.grid.height, f.grid.width);

  const double query_scale = 1.0 / static_cast<double>(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    EncoderTrace qtrace = encode_traced(params, queries[q]);
    FeatureStack<T> qmaps = qtrace.maps();
    RelationTrace rel = relate(params, fused.back().grid, qmaps.back().grid);
    DecoderTrace dec = decode_traced(params, rel.out, fused, qmaps);
    if (!(truths[q].rows == dec.logits.height && truths[q].cols == dec.logits.width))
      throw InvalidArgument("shape-mismatch", "truth mask does not match prediction size");

    Tensor<T> d(1, dec.logits.height, dec.logits.width);
    result.loss += logit_loss<T>(dec.logits.data, truths[q], kind, d.data, query_scale);
    result.predictions.push_back(to_prediction(dec.logits));

    // Head: 1x1 conv, no activation.
    Tensor<T> dx;
    nn::conv2d_backward(dec.block_out.back(), values(params.decoder[2 * n]), 1, 1, d,
                        values(result.grad.decoder[2 * n]), values(result.grad.decoder[2 * n + 1]), &dx);
    d = std::move(dx);

    std::vector<Tensor<T>> dquery;
    for (const auto& m : qmaps) dquery.emplace_back(m.grid.channels, m.grid.height, m.grid.width);

    for (int b = n; b >= 1; --b) {
      nn::relu_backward(dec.block_out[b - 1], d);
      nn::conv2d_backward(dec.block_in[b - 1], values(params.decoder[2 * (b - 1)]), config_.decoder_channels(b), 3, d,
                          values(result.grad.decoder[2 * (b - 1)]), values(result.grad.decoder[2 * (b - 1) + 1]),
                          &dx);
      const int prev = b > 1 ? config_.decoder_channels(b - 1) : config_.relation_width();
      if (b < n) {
        const int skip = fused[n - b - 1].grid.channels;
        nn::add_into(dfused[n - b - 1], nn::slice_channels(dx, prev, skip));
        nn::add_into(dquery[n - b - 1], nn::slice_channels(dx, prev + skip, skip));
      }
      d = nn::upsample2_backward(nn::slice_channels(dx, 0, prev));
    }

    // Relation module: two 1x1 layers with ReLU.
    const int r = config_.relation_width();
    nn::relu_backward(rel.out, d);
    nn::conv2d_backward(rel.hidden, values(params.relation[2]), r, 1, d, values(result.grad.relation[2]),
                        values(result.grad.relation[3]), &dx);
    d = std::move(dx);
    nn::relu_backward(rel.hidden, d);
    nn::conv2d_backward(rel.combined, values(params.relation[0]), r, 1, d, values(result.grad.relation[0]),
                        values(result.grad.relation[1]), &dx);
    const int deep = fused.back().grid.channels;
    nn::add_into(dfused.back(), nn::slice_channels(dx, 0, deep));
    nn::add_into(dquery.back(), nn::slice_channels(dx, deep, deep));

    encoder_backward(params, qtrace, std::move(dquery), result.grad);
  }

  // The fused map is a mean, so each support receives 1/K of its gradient.
  const T inv_k = static_cast<T>(1.0 / static_cast<double>(supports.size()));
  for (auto& g : dfused)
    for (auto& v : g.data) v *= inv_k;
  for (const auto& tr : support_traces) encoder_backward(params, tr, dfused, result.grad);
  return result;
}

Grid<std::int32_t> combine_class_probabilities(std::span<const Prediction> per_class, double tau) {
  if (per_class.empty()) throw InvalidArgument("empty-classes", "need at least one class prediction");
  const auto& first = per_class.front().probs;
  for (const auto& p : per_class)
    if (!p.probs.same_shape(first)) throw InvalidArgument("shape-mismatch", "class predictions differ in size");
  Grid<std::int32_t> labels(first.rows, first.cols, 0);
  for (std::size_t i = 0; i < first.size(); ++i) {
    float best = per_class[0].probs.values[i];
    std::int32_t arg = 0;
    for (std::size_t c = 1; c < per_class.size(); ++c)
      if (per_class[c].probs.values[i] > best) {
        best = per_class[c].probs.values[i];
        arg = static_cast<std::int32_t>(c);
      }
    labels.values[i] = best >= tau ? arg + 1 : 0;
  }
  return labels;
}

template <typename T>
Grid<std::int32_t> multiway_segment(const Network<T>& net, const ModelParams<T>& params,
                                    std::span<const std::vector<ImageMaskPair>> per_class_supports,
                                    const ColorImage& query) {
  if (per_class_supports.empty()) throw InvalidArgument("empty-classes", "need at least one class");
  std::vector<Prediction> preds;
  for (const auto& supports : per_class_supports)
    preds.push_back(net.forward(params, std::span<const ImageMaskPair>(supports), query));
  return combine_class_probabilities(preds);
}

#define FEWSEG_INSTANTIATE(T)                                                                                \
  template struct ModelParams<T>;                                                                            \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                 \
  template Tensor<T> support_input<T>(const ImageMaskPair&);                                                 \
  template Tensor<T> query_input<T>(const ColorImage&);                                                      \
  template FeatureStack<T> fuse_supports<T>(std::span<const FeatureStack<T>>);                               \
  template class Network<T>;                                                                                 \
  template Prediction to_prediction<T>(const Tensor<T>&);                                                    \
  template Grid<std::int32_t> multiway_segment<T>(const Network<T>&, const ModelParams<T>&,                  \
                                                  std::span<const std::vector<ImageMaskPair>>, const ColorImage&);

FEWSEG_INSTANTIATE(float)
FEWSEG_INSTANTIATE(double)
FEWSEG_INSTANTIATE(long double)

}  // namespace fewseg
