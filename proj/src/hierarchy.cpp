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

#include "fewseg/hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "fewseg/error.hpp"

namespace fewseg {

const char* to_string(Level level) {
  switch (level) {
    case Level::top: return "top";
    case Level::middle: return "middle";
    case Level::bottom: return "bottom";
  }
  return "bottom";
}

std::optional<Level> parse_level(const std::string& text) {
  if (text == "top") return Level::top;
  if (text == "middle") return Level::middle;
  if (text == "bottom") return Level::bottom;
  return std::nullopt;
}

void HierarchyGraph::add_node(const std::string& name, Level level, std::vector<std::string> parents) {
  if (name.empty()) throw InvalidArgument("hierarchy-node", "empty hierarchy node name");
  std::sort(parents.begin(), parents.end());
  parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
  nodes_[name] = Node{level, std::move(parents)};
}

const HierarchyGraph::Node& HierarchyGraph::node(const std::string& name) const {
  auto it = nodes_.find(name);
  if (it == nodes_.end()) throw InvalidArgument("unknown-class", "not in hierarchy: " + name);
  return it->second;
}

std::vector<std::string> HierarchyGraph::nodes_at(Level level) const {
  std::vector<std::string> out;
  for (const auto& [name, n] : nodes_)
    if (n.level == level) out.push_back(name);
  return out;
}

std::vector<std::string> HierarchyGraph::top_ancestors(const std::string& name) const {
  std::set<std::string> seen, tops;
  std::vector<std::string> stack{name};
  while (!stack.empty()) {
    std::string cur = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    auto it = nodes_.find(cur);
    if (it == nodes_.end()) continue;
    if (it->second.level == Level::top) tops.insert(cur);
    for (const auto& p : it->second.parents) stack.push_back(p);
  }
  return {tops.begin(), tops.end()};
}

std::vector<std::pair<std::string, std::string>> HierarchyGraph::dangling_edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, n] : nodes_)
    for (const auto& p : n.parents)
      if (!contains(p)) out.emplace_back(name, p);
  return out;
}

std::vector<std::string> HierarchyGraph::cycle_members() const {
  // Three-colour DFS; reports the node closing each back edge.
  enum Colour { white, grey, black };
  std::map<std::string, Colour> colour;
  for (const auto& [name, n] : nodes_) colour[name] = white;
  std::vector<std::string> found;

  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    colour[v] = grey;
    for (const auto& p : nodes_.at(v).parents) {
      auto it = colour.find(p);
      if (it == colour.end()) continue;
      if (it->second == grey) {
        found.push_back(p);
      } else if (it->second == white) {
        visit(p);
      }
    }
    colour[v] = black;
  };
  for (const auto& [name, n] : nodes_)
    if (colour[name] == white) visit(name);
  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());
  return found;
}

HierarchyGraph HierarchyGraph::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("unreadable", "cannot open hierarchy file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("hierarchy-format", "malformed hierarchy file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw IoError("hierarchy-format", "hierarchy root must be an object: " + path);
  HierarchyGraph g;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("level"))
      throw IoError("hierarchy-format", "hierarchy entry needs a level: " + name);
    auto level = parse_level(entry.at("level").get<std::string>());
    if (!level) throw IoError("hierarchy-format", "bad level for " + name);
    std::vector<std::string> parents;
    if (entry.contains("parents")) parents = entry.at("parents").get<std::vector<std::string>>();
    g.add_node(name, *level, std::move(parents));
  }
  return g;
}

void HierarchyGraph::save_json(const std::string& path) const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, n] : nodes_)
    doc[name] = {{"level", to_string(n.level)}, {"parents", n.parents}};
  std::ofstream out(path);
  if (!out) throw IoError("unwritable", "cannot write hierarchy file: " + path);
  out << doc.dump(1) << '\n';
}

}  // namespace fewseg
