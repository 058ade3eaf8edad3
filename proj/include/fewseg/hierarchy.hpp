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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fewseg {

enum class Level { top, middle, bottom };

const char* to_string(Level level);
std::optional<Level> parse_level(const std::string& text);

// Class hierarchy: nodes tagged with a level, edges point child -> parent.
// A node may have several parents, so this is a DAG rather than a tree.
class HierarchyGraph {
 public:
  struct Node {
    Level level = Level::bottom;
    std::vector<std::string> parents;
  };

  void add_node(const std::string& name, Level level, std::vector<std::string> parents = {});

  bool contains(const std::string& name) const { return nodes_.count(name) != 0; }
  const Node& node(const std::string& name) const;
  const std::map<std::string, Node>& nodes() const { return nodes_; }

  std::vector<std::string> nodes_at(Level level) const;

  // Top-level nodes reachable from `name` (sorted). Cycles are tolerated.
  std::vector<std::string> top_ancestors(const std::string& name) const;
  // Parents referenced by some node but never declared.
  std::vector<std::pair<std::string, std::string>> dangling_edges() const;
  // One node per detected cycle (empty when acyclic).
  std::vector<std::string> cycle_members() const;

  // Reads `{"name": {"level": "...", "parents": [...]}, ...}`.
  static HierarchyGraph load_json(const std::string& path);
  void save_json(const std::string& path) const;

  friend bool operator==(const HierarchyGraph& a, const HierarchyGraph& b) {
    return a.nodes_ == b.nodes_;
  }
  friend bool operator==(const Node& a, const Node& b) {
    return a.level == b.level && a.parents == b.parents;
  }

 private:
  std::map<std::string, Node> nodes_;
};

}  // namespace fewseg
