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

#include "fewseg/training.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "fewseg/error.hpp"

namespace fs = std::filesystem;

namespace fewseg {

void TrainConfig::check() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw InvalidArgument("lr0", "learning rate must be finite and >= 0");
  if (!(fine_tune_lr >= 0.0)) throw InvalidArgument("fine-tune-lr", "fine-tune learning rate must be >= 0");
  if (halve_every < 1) throw InvalidArgument("halve-every", "halve_every must be at least 1");
  if (k_shot < 1 || n_query < 1) throw InvalidArgument("k-shot", "k_shot and n_query must be at least 1");
  if (eval_episodes_per_class < 1) throw InvalidArgument("eval-episodes", "eval_episodes_per_class must be >= 1");
}

double lr_schedule(double lr0, std::uint64_t halve_every, std::uint64_t episode_index) {
  if (halve_every == 0) throw InvalidArgument("halve-every", "halve_every must be at least 1");
  return std::ldexp(lr0, -static_cast<int>(std::min<std::uint64_t>(episode_index / halve_every, 2000)));
}

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train, ModelParams<float> initial)
    : model_(model), train_(train), net_(model), params_(std::move(initial)) {
  train_.check();
  if (!(params_.config == model_)) throw InvalidArgument("model-config", "initial parameters use another config");
  optimizer_ = AdamState<float>::zeros_like(params_);
}

Trainer::Trainer(const Checkpoint& checkpoint)
    : model_(checkpoint.model),
      train_(checkpoint.train),
      net_(checkpoint.model),
      params_(checkpoint.params),
      optimizer_(checkpoint.optimizer) {}

TraceRow Trainer::step(const Episode& episode, std::uint64_t episode_index) {
  std::vector<Tensor<float>> supports, queries;
  for (const auto& s : episode.support) supports.push_back(support_input<float>(s));
  for (const auto& q : episode.query_images) queries.push_back(query_input<float>(q));
  auto lg = net_.loss_and_gradient(params_, supports, queries, episode.query_truth, train_.loss);

  TraceRow row{episode_index, lg.loss, lr_schedule(train_.lr0, train_.halve_every, episode_index)};
  bool finite = std::isfinite(lg.loss) && lg.grad.all_finite();
  if (!finite) {
    if (++non_finite_streak_ >= kDivergencePatience)
      throw Error("divergence", "loss non-finite for " + std::to_string(non_finite_streak_) +
                                    " consecutive episodes (last episode " + std::to_string(episode_index) + ")");
    return row;
  }
  non_finite_streak_ = 0;
  adam_update(params_, lg.grad, optimizer_, row.lr);
  return row;
}

Checkpoint Trainer::checkpoint(std::uint64_t next_episode) const {
  return Checkpoint{model_, train_, train_.seed, next_episode, params_, optimizer_};
}

TrainResult train(const DatasetRegistry& registry, const SplitSpec& split, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options) {
  config.check();
  if (split.train.empty()) throw InvalidArgument("empty-split", "training split has no classes");
  auto cache = options.cache ? options.cache : std::make_shared<PairCache>();
  EpisodeSpec spec{2, config.k_shot, config.n_query, config.seed};
  EpisodeStream stream(registry, split.train, spec, config.n_episodes, cache);

  std::unique_ptr<Trainer> trainer;
  std::uint64_t start = 0;
  if (options.resume) {
    if (!(options.resume->model == model)) throw InvalidArgument("model-config", "checkpoint uses another model config");
    Checkpoint resumed = *options.resume;
    resumed.train = config;
    trainer = std::make_unique<Trainer>(resumed);
    start = options.resume->episode_index;
  } else if (options.initial_params) {
    trainer = std::make_unique<Trainer>(model, config, *options.initial_params);
  } else {
    trainer = std::make_unique<Trainer>(model, config, init_params<float>(model, config.seed));
  }

  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.checkpoint_dir, ec);
    if (ec || !fs::is_directory(config.checkpoint_dir))
      throw IoError("unwritable", "cannot create checkpoint directory: " + config.checkpoint_dir);
  }

  TrainResult result;
  for (auto it = stream.from(start); it != stream.end(); ++it) {
    const std::uint64_t index = it.index();
    TraceRow row = trainer->step(*it, index);
    result.trace.push_back(row);
    if (options.on_episode) options.on_episode(row);
    const std::uint64_t done = index + 1;
    if (config.eval_every > 0 && done % config.eval_every == 0 && !split.val.empty()) {
      MetricsReport r = evaluate(trainer->checkpoint(done), registry, split.val, config.k_shot,
                                 config.eval_episodes_per_class, config.seed, cache.get());
      result.validation.push_back({done, r.global.mean_iou});
    }
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && !config.checkpoint_dir.empty())
      save_checkpoint(trainer->checkpoint(done),
                      (fs::path(config.checkpoint_dir) / ("ckpt-" + std::to_string(done) + ".bin")).string());
  }
  result.checkpoint = trainer->checkpoint(std::max(start, config.n_episodes));
  if (!config.checkpoint_dir.empty())
    save_checkpoint(result.checkpoint, (fs::path(config.checkpoint_dir) / "final.bin").string());
  return result;
}

Predictor model_predictor(const Checkpoint& checkpoint) {
  auto net = std::make_shared<Network<float>>(checkpoint.model);
  auto params = std::make_shared<ModelParams<float>>(checkpoint.params);
  return [net, params](const Episode& ep, std::size_t q) {
    return net->forward(*params, std::span<const ImageMaskPair>(ep.support), ep.query_images.at(q));
  };
}

MetricsReport evaluate_predictor(const Predictor& predictor, const DatasetRegistry& registry,
                                 const std::vector<std::string>& class_list, int k_shot, int episodes_per_class,
                                 std::uint64_t seed, PairCache* cache) {
  if (class_list.empty()) throw InvalidArgument("empty-split", "no classes to evaluate");
  if (episodes_per_class < 1) throw InvalidArgument("eval-episodes", "need at least one episode per class");
  for (const auto& c : class_list)
    if (registry.class_entry(c).pairs.size() < static_cast<std::size_t>(k_shot) + 1)
      throw InvalidArgument("class-too-small", "class " + c + " cannot host a " + std::to_string(k_shot) +
                                                   "-shot episode");
  PairCache local;
  PairCache& store = cache ? *cache : local;
  EpisodeSpec spec{2, k_shot, 1, seed};
  std::vector<IouRecord> records;
  for (std::size_t ci = 0; ci < class_list.size(); ++ci) {
    const std::vector<std::string> only{class_list[ci]};
    for (int e = 0; e < episodes_per_class; ++e) {
      Episode ep = sample_episode(registry, only, spec, ci * episodes_per_class + e, store);
      for (std::size_t q = 0; q < ep.query_images.size(); ++q) {
        Mask pred = threshold_mask(predictor(ep, q), 0.5);
        records.push_back({ep.class_name, iou(pred, ep.query_truth[q])});
      }
    }
  }
  MetricsReport report = mean_iou(records, registry.hierarchy());
  report.metadata["k_shot"] = std::to_string(k_shot);
  report.metadata["episodes_per_class"] = std::to_string(episodes_per_class);
  report.metadata["seed"] = std::to_string(seed);
  return report;
}

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetRegistry& registry,
                       const std::vector<std::string>& class_list, int k_shot, int episodes_per_class,
                       std::uint64_t seed, PairCache* cache) {
  MetricsReport r =
      evaluate_predictor(model_predictor(checkpoint), registry, class_list, k_shot, episodes_per_class, seed, cache);
  r.metadata["checkpoint_episode"] = std::to_string(checkpoint.episode_index);
  return r;
}

void AblationResult::write_comparison_csv(std::ostream& out) const {
  const auto old = out.precision(10);
  out << "superclass";
  for (int k : k_values) out << ",k=" << k;
  out << '\n';
  std::map<std::string, std::vector<std::string>> rows;
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (const auto& r : reports[i].superclasses) rows[r.name].resize(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (const auto& r : reports[i].superclasses) {
      std::ostringstream v;
      v.precision(10);
      v << r.mean_iou;
      rows[r.name][i] = v.str();
    }
  for (const auto& [name, vals] : rows) {
    out << name;
    for (const auto& v : vals) out << ',' << v;
    out << '\n';
  }
  out << "all";
  for (const auto& r : reports) out << ',' << r.global.mean_iou;
  out << '\n';
  out.precision(old);
}

AblationResult kshot_ablation(const DatasetRegistry& registry, const SplitSpec& split, const ModelConfig& model,
                              const TrainConfig& config, const std::vector<int>& k_values,
                              std::shared_ptr<PairCache> cache) {
  if (k_values.empty()) throw InvalidArgument("k-values", "need at least one k value");
  std::size_t smallest = SIZE_MAX;
  for (const auto& name : split.train) smallest = std::min(smallest, registry.class_entry(name).pairs.size());
  for (const auto& name : split.test) smallest = std::min(smallest, registry.class_entry(name).pairs.size());
  for (int k : k_values)
    if (k < 1 || static_cast<std::size_t>(k) + config.n_query > smallest)
      throw InvalidArgument("k-values", "k=" + std::to_string(k) + " does not fit the smallest class");
  if (!cache) cache = std::make_shared<PairCache>();

  AblationResult out;
  out.k_values = k_values;
  for (int k : k_values) {
    TrainConfig c = config;
    c.k_shot = k;
    if (!c.checkpoint_dir.empty()) c.checkpoint_dir = (fs::path(c.checkpoint_dir) / ("k" + std::to_string(k))).string();
    TrainOptions opts;
    opts.cache = cache;
    out.runs.push_back(train(registry, split, model, c, opts));
    out.reports.push_back(
        evaluate(out.runs.back().checkpoint, registry, split.test, k, c.eval_episodes_per_class, c.seed, cache.get()));
  }
  return out;
}

ProtocolResult cross_dataset_protocol(const std::vector<ProtocolStage>& train_stages,
                                      const std::vector<ProtocolStage>& eval_registries, const ModelConfig& model,
                                      const TrainConfig& config, std::shared_ptr<PairCache> cache) {
  if (train_stages.empty()) throw InvalidArgument("empty-stages", "protocol needs at least one training stage");
  if (!cache) cache = std::make_shared<PairCache>();
  ProtocolResult out;
  for (std::size_t i = 0; i < train_stages.size(); ++i) {
    const auto& stage = train_stages[i];
    if (!stage.registry) throw InvalidArgument("empty-stages", "stage without registry");
    TrainConfig c = config;
    c.lr0 = i == 0 ? config.lr0 : config.fine_tune_lr;
    if (!c.checkpoint_dir.empty())
      c.checkpoint_dir = (fs::path(c.checkpoint_dir) / ("stage" + std::to_string(i + 1))).string();
    TrainOptions opts;
    opts.cache = cache;
    if (i > 0) opts.initial_params = &out.stages.back().checkpoint.params;
    out.stage_lr0.push_back(c.lr0);
    out.stages.push_back(train(*stage.registry, stage.split, model, c, opts));
  }
  const Checkpoint& final = out.stages.back().checkpoint;
  for (const auto& e : eval_registries) {
    if (!e.registry) throw InvalidArgument("empty-stages", "evaluation entry without registry");
    out.eval_names.push_back(e.name);
    out.reports.push_back(
        evaluate(final, *e.registry, e.split.test, config.k_shot, config.eval_episodes_per_class, config.seed,
                 cache.get()));
    out.reports.back().metadata["dataset"] = e.name;
  }
  return out;
}

}  // namespace fewseg
