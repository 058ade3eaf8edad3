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
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fewseg/dataset.hpp"
#include "fewseg/episodes.hpp"
#include "fewseg/model.hpp"
#include "fewseg/objectives.hpp"
#include "fewseg/optimizer.hpp"

namespace fewseg {

inline constexpr double kDefaultLearningRate = 1e-3;
inline constexpr double kFineTuneLearningRate = 1e-4;
inline constexpr std::uint64_t kDefaultHalveEvery = 50000;
inline constexpr std::uint64_t kDefaultEpisodes = 500000;
inline constexpr int kDivergencePatience = 3;

struct TrainConfig {
  LossKind loss = LossKind::bce;
  double lr0 = kDefaultLearningRate;
  double fine_tune_lr = kFineTuneLearningRate;
  std::uint64_t halve_every = kDefaultHalveEvery;
  std::uint64_t n_episodes = kDefaultEpisodes;
  int k_shot = 5;
  int n_query = 1;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::uint64_t eval_every = 0;        // 0: no validation during training
  int eval_episodes_per_class = 5;
  std::string checkpoint_dir;          // empty: checkpoints stay in memory

  void check() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// lr0 * 0.5^floor(episode / halve_every)
double lr_schedule(double lr0, std::uint64_t halve_every, std::uint64_t episode_index);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::uint64_t episode_index = 0;  // next episode to run
  ModelParams<float> params;
  AdamState<float> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Binary container: magic, JSON header describing every array, raw
// little-endian float32 payload. Round trips bit-exactly.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// FNV-1a over the parameter and optimizer payload.
std::uint64_t checkpoint_digest(const Checkpoint& checkpoint);

struct TraceRow {
  std::uint64_t episode = 0;
  double loss = 0.0;
  double lr = 0.0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};
void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

// Sequential single-episode updater.
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train, ModelParams<float> initial);
  explicit Trainer(const Checkpoint& checkpoint);

  // Forward, loss, gradient and one Adam step at the scheduled rate.
  // Non-finite losses skip the update; too many in a row throw.
  TraceRow step(const Episode& episode, std::uint64_t episode_index);

  const ModelParams<float>& params() const { return params_; }
  const Network<float>& network() const { return net_; }
  Checkpoint checkpoint(std::uint64_t next_episode) const;

 private:
  ModelConfig model_;
  TrainConfig train_;
  Network<float> net_;
  ModelParams<float> params_;
  AdamState<float> optimizer_;
  int non_finite_streak_ = 0;
};

struct ValidationPoint {
  std::uint64_t episode = 0;
  double mean_iou = 0.0;
};

struct TrainOptions {
  const Checkpoint* resume = nullptr;
  // Starting weights when not resuming (fine-tuning); fresh init otherwise.
  const ModelParams<float>* initial_params = nullptr;
  std::shared_ptr<PairCache> cache;
  std::function<void(const TraceRow&)> on_episode;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
  std::vector<ValidationPoint> validation;
};

TrainResult train(const DatasetRegistry& registry, const SplitSpec& split, const ModelConfig& model,
                  const TrainConfig& config, const TrainOptions& options = {});

// Produces the prediction for query `query_index` of an episode.
using Predictor = std::function<Prediction(const Episode&, std::size_t query_index)>;

Predictor model_predictor(const Checkpoint& checkpoint);

// For every class, `episodes_per_class` one-query episodes; IoU at 0.5.
MetricsReport evaluate_predictor(const Predictor& predictor, const DatasetRegistry& registry,
                                 const std::vector<std::string>& class_list, int k_shot, int episodes_per_class,
                                 std::uint64_t seed, PairCache* cache = nullptr);

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetRegistry& registry,
                       const std::vector<std::string>& class_list, int k_shot, int episodes_per_class,
                       std::uint64_t seed, PairCache* cache = nullptr);

struct AblationResult {
  std::vector<int> k_values;
  std::vector<TrainResult> runs;
  std::vector<MetricsReport> reports;

  // `superclass,k=1,k=3,...` plus a final `all` row.
  void write_comparison_csv(std::ostream& out) const;
};

AblationResult kshot_ablation(const DatasetRegistry& registry, const SplitSpec& split, const ModelConfig& model,
                              const TrainConfig& config, const std::vector<int>& k_values,
                              std::shared_ptr<PairCache> cache = nullptr);

struct ProtocolStage {
  std::string name;
  const DatasetRegistry* registry = nullptr;
  SplitSpec split;
};

struct ProtocolResult {
  std::vector<double> stage_lr0;
  std::vector<TrainResult> stages;
  std::vector<std::string> eval_names;
  std::vector<MetricsReport> reports;
};

// Trains through the stages in order (later stages fine-tune at
// config.fine_tune_lr with a fresh optimizer and schedule), then evaluates on
// each evaluation registry's test split.
ProtocolResult cross_dataset_protocol(const std::vector<ProtocolStage>& train_stages,
                                      const std::vector<ProtocolStage>& eval_registries, const ModelConfig& model,
                                      const TrainConfig& config, std::shared_ptr<PairCache> cache = nullptr);

}  // namespace fewseg
