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

#include "fewseg/episodes.hpp"

#include <numeric>
#include <random>

#include "fewseg/error.hpp"

namespace fewseg {

void EpisodeSpec::check() const {
  if (k_shot < 1) throw InvalidArgument("k-shot", "k_shot must be at least 1");
  if (n_query < 1) throw InvalidArgument("n-query", "n_query must be at least 1");
  if (n_way != 2) throw InvalidArgument("n-way", "episodes are binary (n_way = 2)");
}

EpisodeDraw draw_episode(const DatasetRegistry& registry, const std::vector<std::string>& split_classes,
                         const EpisodeSpec& spec, std::uint64_t episode_index) {
  spec.check();
  if (split_classes.empty()) throw InvalidArgument("empty-split", "no classes to sample episodes from");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(episode_index), static_cast<std::uint32_t>(episode_index >> 32)};
  std::mt19937_64 rng(seq);

  EpisodeDraw draw;
  std::uniform_int_distribution<std::size_t> pick_class(0, split_classes.size() - 1);
  draw.class_name = split_classes[pick_class(rng)];
  const ClassEntry& entry = registry.class_entry(draw.class_name);
  const std::size_t need = static_cast<std::size_t>(spec.k_shot) + spec.n_query;
  if (entry.pairs.size() < need)
    throw InvalidArgument("class-too-small", "class " + draw.class_name + " has " +
                                                 std::to_string(entry.pairs.size()) + " pairs, episode needs " +
                                                 std::to_string(need));

  // Partial Fisher-Yates: the first `need` slots are a uniform draw without replacement.
  std::vector<std::size_t> idx(entry.pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  draw.support_indices.assign(idx.begin(), idx.begin() + spec.k_shot);
  draw.query_indices.assign(idx.begin() + spec.k_shot, idx.begin() + need);
  return draw;
}

Episode load_episode(const DatasetRegistry& registry, const EpisodeDraw& draw, PairCache& cache) {
  const ClassEntry& entry = registry.class_entry(draw.class_name);
  Episode ep;
  ep.class_name = draw.class_name;
  for (auto i : draw.support_indices) ep.support.push_back(*cache.get(entry.pairs.at(i)));
  for (auto i : draw.query_indices) {
    auto pair = cache.get(entry.pairs.at(i));
    ep.query_images.push_back(pair->image);
    ep.query_truth.push_back(pair->mask);
    ep.query_paths.push_back(pair->source_path);
  }
  return ep;
}

Episode sample_episode(const DatasetRegistry& registry, const std::vector<std::string>& split_classes,
                       const EpisodeSpec& spec, std::uint64_t episode_index, PairCache& cache) {
  return load_episode(registry, draw_episode(registry, split_classes, spec, episode_index), cache);
}

EpisodeStream::EpisodeStream(const DatasetRegistry& registry, std::vector<std::string> split_classes,
                             EpisodeSpec spec, std::uint64_t n_episodes, std::shared_ptr<PairCache> cache)
    : registry_(&registry),
      classes_(std::move(split_classes)),
      spec_(spec),
      n_episodes_(n_episodes),
      cache_(cache ? std::move(cache) : std::make_shared<PairCache>()) {
  spec_.check();
  if (n_episodes_ > 0 && classes_.empty()) throw InvalidArgument("empty-split", "no classes to sample episodes from");
}

Episode EpisodeStream::at(std::uint64_t index) const {
  if (index >= n_episodes_) throw InvalidArgument("episode-index", "episode index out of range");
  return sample_episode(*registry_, classes_, spec_, index, *cache_);
}

EpisodeDraw EpisodeStream::draw_at(std::uint64_t index) const {
  if (index >= n_episodes_) throw InvalidArgument("episode-index", "episode index out of range");
  return draw_episode(*registry_, classes_, spec_, index);
}

}  // namespace fewseg
