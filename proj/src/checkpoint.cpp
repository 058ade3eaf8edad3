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

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "fewseg/error.hpp"
#include "fewseg/training.hpp"

namespace fewseg {
namespace {

constexpr char kMagic[8] = {'F', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

nlohmann::json model_json(const ModelConfig& m) {
  return {{"n_stages", m.encoder.n_stages},         {"base_channels", m.encoder.base_channels},
          {"channel_growth", m.encoder.channel_growth}, {"convs_per_stage", m.encoder.convs_per_stage},
          {"max_channels", m.encoder.max_channels},   {"relation_channels", m.relation_channels},
          {"input_size", m.input_size}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.encoder.n_stages = j.at("n_stages");
  m.encoder.base_channels = j.at("base_channels");
  m.encoder.channel_growth = j.at("channel_growth");
  m.encoder.convs_per_stage = j.at("convs_per_stage");
  m.encoder.max_channels = j.at("max_channels");
  m.relation_channels = j.at("relation_channels");
  m.input_size = j.at("input_size");
  return m;
}

// Doubles go through their bit pattern so the header round trips exactly.
std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(const nlohmann::json& j) { return std::bit_cast<double>(j.get<std::uint64_t>()); }

nlohmann::json train_json(const TrainConfig& t) {
  return {{"loss", to_string(t.loss)},
          {"lr0", bits(t.lr0)},
          {"fine_tune_lr", bits(t.fine_tune_lr)},
          {"halve_every", t.halve_every},
          {"n_episodes", t.n_episodes},
          {"k_shot", t.k_shot},
          {"n_query", t.n_query},
          {"seed", t.seed},
          {"checkpoint_every", t.checkpoint_every},
          {"eval_every", t.eval_every},
          {"eval_episodes_per_class", t.eval_episodes_per_class},
          {"checkpoint_dir", t.checkpoint_dir}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  auto loss = parse_loss_kind(j.at("loss").get<std::string>());
  if (!loss) throw IoError("checkpoint-format", "unknown loss in checkpoint");
  t.loss = *loss;
  t.lr0 = from_bits(j.at("lr0"));
  t.fine_tune_lr = from_bits(j.at("fine_tune_lr"));
  t.halve_every = j.at("halve_every");
  t.n_episodes = j.at("n_episodes");
  t.k_shot = j.at("k_shot");
  t.n_query = j.at("n_query");
  t.seed = j.at("seed");
  t.checkpoint_every = j.at("checkpoint_every");
  t.eval_every = j.at("eval_every");
  t.eval_episodes_per_class = j.at("eval_episodes_per_class");
  t.checkpoint_dir = j.at("checkpoint_dir");
  return t;
}

struct Section {
  const char* prefix;
  const ModelParams<float>* params;
};

template <typename F>
void for_each_array(const Checkpoint& c, F&& f) {
  for (Section s : {Section{"params/", &c.params}, Section{"adam.m/", &c.optimizer.m}, Section{"adam.v/", &c.optimizer.v}})
    s.params->for_each([&](const ParamArray<float>& a) { f(std::string(s.prefix) + a.name, a); });
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  nlohmann::json header = {{"format", kFormatVersion},
                           {"model", model_json(checkpoint.model)},
                           {"train", train_json(checkpoint.train)},
                           {"seed", checkpoint.seed},
                           {"episode_index", checkpoint.episode_index},
                           {"adam_step", checkpoint.optimizer.step},
                           {"arrays", nlohmann::json::array()}};
  std::uint64_t offset = 0;
  for_each_array(checkpoint, [&](const std::string& name, const ParamArray<float>& a) {
    header["arrays"].push_back({{"name", name}, {"shape", a.shape}, {"dtype", "f32"}, {"offset", offset},
                                {"count", a.values.size()}});
    offset += a.values.size() * sizeof(float);
  });
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("unwritable", "cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for_each_array(checkpoint, [&](const std::string&, const ParamArray<float>& a) {
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(float)));
  });
  if (!out) throw IoError("unwritable", "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable", "cannot open checkpoint: " + path);
  char magic[sizeof kMagic];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("checkpoint-format", "not a checkpoint file: " + path);
  if (version != kFormatVersion) throw IoError("checkpoint-format", "unsupported checkpoint version in " + path);
  if (len > (1u << 30)) throw IoError("checkpoint-format", "implausible header length in " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.eof() && in.fail()) throw IoError("checkpoint-format", "truncated checkpoint: " + path);

  Checkpoint c;
  try {
    nlohmann::json header = nlohmann::json::parse(text);
    c.model = model_from_json(header.at("model"));
    c.train = train_from_json(header.at("train"));
    c.seed = header.at("seed");
    c.episode_index = header.at("episode_index");
    c.optimizer.step = header.at("adam_step");

    ModelParams<float> layout = init_params<float>(c.model, 0).zeros_like();
    c.params = layout;
    c.optimizer.m = layout;
    c.optimizer.v = layout;
    std::map<std::string, ParamArray<float>*> slots;
    for (auto [prefix, target] : {std::pair{"params/", &c.params}, std::pair{"adam.m/", &c.optimizer.m},
                                  std::pair{"adam.v/", &c.optimizer.v}})
      target->for_each([&, p = std::string(prefix)](ParamArray<float>& a) { slots[p + a.name] = &a; });

    std::size_t filled = 0;
    for (const auto& entry : header.at("arrays")) {
      const std::string name = entry.at("name");
      auto it = slots.find(name);
      if (it == slots.end()) throw IoError("checkpoint-format", "unexpected array " + name);
      ParamArray<float>& a = *it->second;
      if (entry.at("shape").get<std::vector<int>>() != a.shape || entry.at("dtype") != "f32")
        throw IoError("checkpoint-format", "array " + name + " does not match the model layout");
      const std::uint64_t offset = entry.at("offset"), count = entry.at("count");
      if (count != a.values.size() || offset + count * sizeof(float) > payload.size())
        throw IoError("checkpoint-format", "array " + name + " out of payload bounds");
      std::memcpy(a.values.data(), payload.data() + offset, count * sizeof(float));
      ++filled;
    }
    if (filled != slots.size()) throw IoError("checkpoint-format", "checkpoint is missing arrays");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint-format", std::string("malformed checkpoint header: ") + e.what());
  }
  return c;
}

std::uint64_t checkpoint_digest(const Checkpoint& checkpoint) {
  std::uint64_t h = 1469598103934665603ull;
  for_each_array(checkpoint, [&](const std::string&, const ParamArray<float>& a) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(a.values.data());
    for (std::size_t i = 0; i < a.values.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  });
  return h;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  const auto old = out.precision(17);
  out << "episode,loss,lr\n";
  for (const auto& r : trace) out << r.episode << ',' << r.loss << ',' << r.lr << '\n';
  out.precision(old);
}

}  // namespace fewseg
