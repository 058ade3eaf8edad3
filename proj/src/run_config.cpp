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

#include "fewseg/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fewseg/error.hpp"

namespace fewseg {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    const ModelConfig m;
    const TrainConfig t;
    return std::vector<ConfigKey>{
        {"dataset", "", "dataset root directory"},
        {"splits-file", "", "split file (default: <dataset>/splits-<seed>.txt)"},
        {"out", "", "output directory or file"},
        {"checkpoint", "", "checkpoint file"},
        {"seed", "0", "seed for all randomness in the run"},
        {"k-shot", std::to_string(t.k_shot), "support pairs per episode"},
        {"n-query", std::to_string(t.n_query), "query images per episode"},
        {"workers", "1", "parallel workers for validation and inference"},
        {"n-stages", std::to_string(m.encoder.n_stages), "encoder stages"},
        {"base-channels", std::to_string(m.encoder.base_channels), "channels of the first stage"},
        {"channel-growth", std::to_string(m.encoder.channel_growth), "channel multiplier per stage"},
        {"convs-per-stage", std::to_string(m.encoder.convs_per_stage), "3x3 convolutions per stage"},
        {"max-channels", std::to_string(m.encoder.max_channels), "channel cap, 0 for none"},
        {"relation-channels", std::to_string(m.relation_channels), "relation width, 0 for deepest stage width"},
        {"input-size", std::to_string(m.input_size), "network input side"},
        {"loss", to_string(t.loss), "bce or mse"},
        {"lr0", fmt_double(t.lr0), "initial learning rate"},
        {"fine-tune-lr", fmt_double(t.fine_tune_lr), "initial learning rate of later protocol stages"},
        {"halve-every", std::to_string(t.halve_every), "episodes between learning-rate halvings"},
        {"n-episodes", std::to_string(t.n_episodes), "training episodes"},
        {"checkpoint-every", std::to_string(t.checkpoint_every), "episodes between checkpoints, 0 for final only"},
        {"eval-every", std::to_string(t.eval_every), "episodes between validation runs, 0 for none"},
        {"eval-episodes", std::to_string(t.eval_episodes_per_class), "evaluation episodes per class"},
        {"split", "test", "split evaluated by eval: train, val or test"},
        {"resume", "", "checkpoint to resume training from"},
        {"per-super-val", "20", "validation classes per superclass"},
        {"per-super-test", "20", "test classes per superclass"},
        {"n-classes", "30", "synthetic classes"},
        {"images-per-class", "10", "synthetic pairs per class"},
        {"distractor-probability", "0", "chance of a distractor shape per synthetic image"},
        {"labels-dir", "", "directory of <stem>.labels.png multi-class label maps next to <stem>.jpg"},
        {"target-class", "", "label id to binarize"},
        {"k-values", "1,5", "comma separated shot counts for ablate-k"},
        {"stages", "", "comma separated dataset roots trained in order"},
        {"eval-datasets", "", "comma separated dataset roots evaluated after the protocol"},
        {"support", "", "support manifest"},
        {"support-dir", "", "directory of <k>.jpg/<k>.png support pairs"},
        {"corpus", "", "directory of images to label"},
        {"truths", "", "directory of truth masks named like the corpus images"},
        {"n-hard", "10", "hard cases to report"},
        {"corrections", "", "directory of corrected masks named like the corpus images"},
    };
  }();
  return keys;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config-syntax", origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!find_key(key))
      throw InvalidArgument("unknown-key", origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing-file", "cannot read config " + path);
  return parse(in, path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw InvalidArgument("unknown-key", "unknown key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::get(const std::string& key) const {
  const ConfigKey* k = find_key(key);
  if (!k) throw InvalidArgument("unknown-key", "unknown key '" + key + "'");
  auto it = values_.find(key);
  return it != values_.end() ? it->second : k->default_value;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::string v = get(key);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw InvalidArgument("bad-value", key + " expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  std::int64_t v = get_int(key);
  if (v < 0) throw InvalidArgument("bad-value", key + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
  std::string v = get(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("bad-value", key + " expects a number, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : get_list(key)) {
    int v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size())
      throw InvalidArgument("bad-value", key + " expects integers, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.encoder.n_stages = static_cast<int>(get_int("n-stages"));
  m.encoder.base_channels = static_cast<int>(get_int("base-channels"));
  m.encoder.channel_growth = static_cast<int>(get_int("channel-growth"));
  m.encoder.convs_per_stage = static_cast<int>(get_int("convs-per-stage"));
  m.encoder.max_channels = static_cast<int>(get_int("max-channels"));
  m.relation_channels = static_cast<int>(get_int("relation-channels"));
  m.input_size = static_cast<int>(get_int("input-size"));
  m.check();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  auto loss = parse_loss_kind(get("loss"));
  if (!loss) throw InvalidArgument("bad-value", "loss must be bce or mse, got '" + get("loss") + "'");
  t.loss = *loss;
  t.lr0 = get_double("lr0");
  t.fine_tune_lr = get_double("fine-tune-lr");
  t.halve_every = get_uint("halve-every");
  t.n_episodes = get_uint("n-episodes");
  t.k_shot = static_cast<int>(get_int("k-shot"));
  t.n_query = static_cast<int>(get_int("n-query"));
  t.seed = get_uint("seed");
  t.checkpoint_every = get_uint("checkpoint-every");
  t.eval_every = get_uint("eval-every");
  t.eval_episodes_per_class = static_cast<int>(get_int("eval-episodes"));
  t.check();
  return t;
}

void RunConfig::write_resolved(std::ostream& out) const {
  for (const auto& k : config_keys()) {
    std::string v = get(k.name);
    out << k.name << " =";
    if (!v.empty()) out << ' ' << v;
    out << '\n';
  }
}

}  // namespace fewseg
