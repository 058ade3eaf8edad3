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
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "fewseg/dataset.hpp"

namespace fewseg {

struct EpisodeSpec {
  int n_way = 2;  // binary: foreground vs background
  int k_shot = 5;
  int n_query = 1;
  std::uint64_t seed = 0;

  void check() const;
};

struct Episode {
  std::string class_name;
  std::vector<ImageMaskPair> support;
  std::vector<ColorImage> query_images;
  std::vector<Mask> query_truth;
  std::vector<std::string> query_paths;
};

// Which pairs of which class an episode uses, before any pixel is loaded.
struct EpisodeDraw {
  std::string class_name;
  std::vector<std::size_t> support_indices;
  std::vector<std::size_t> query_indices;
};

// Pure function of (spec.seed, episode_index).
EpisodeDraw draw_episode(const DatasetRegistry& registry, const std::vector<std::string>& split_classes,
                         const EpisodeSpec& spec, std::uint64_t episode_index);

Episode load_episode(const DatasetRegistry& registry, const EpisodeDraw& draw, PairCache& cache);

Episode sample_episode(const DatasetRegistry& registry, const std::vector<std::string>& split_classes,
                       const EpisodeSpec& spec, std::uint64_t episode_index, PairCache& cache);

// Index-addressed view over episodes [first, first + count). Nothing is
// loaded until an element is read.
class EpisodeStream {
 public:
  EpisodeStream(const DatasetRegistry& registry, std::vector<std::string> split_classes, EpisodeSpec spec,
                std::uint64_t n_episodes, std::shared_ptr<PairCache> cache = nullptr);

  std::uint64_t size() const { return n_episodes_; }
  bool empty() const { return n_episodes_ == 0; }
  Episode at(std::uint64_t index) const;
  EpisodeDraw draw_at(std::uint64_t index) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Episode;
    using difference_type = std::ptrdiff_t;

    iterator(const EpisodeStream* stream, std::uint64_t index) : stream_(stream), index_(index) {}
    Episode operator*() const { return stream_->at(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    std::uint64_t index() const { return index_; }
    bool operator==(const iterator& o) const { return index_ == o.index_; }

   private:
    const EpisodeStream* stream_;
    std::uint64_t index_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, n_episodes_}; }
  // Restart point; identical to advancing a fresh iterator `index` times.
  iterator from(std::uint64_t index) const { return {this, std::min(index, n_episodes_)}; }

 private:
  const DatasetRegistry* registry_;
  std::vector<std::string> classes_;
  EpisodeSpec spec_;
  std::uint64_t n_episodes_;
  std::shared_ptr<PairCache> cache_;
};

}  // namespace fewseg
