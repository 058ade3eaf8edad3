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
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fewseg/model.hpp"
#include "fewseg/training.hpp"

namespace fewseg {

struct ConfigKey {
  std::string name;           // also the flag spelling: --name
  std::string default_value;  // empty: unset unless given
  std::string help;
};

// Every key a run may carry, in emission order.
const std::vector<ConfigKey>& config_keys();

// Flat `key = value` document. Values from a file are overridden by later
// `set` calls (command-line flags).
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(std::istream& in, const std::string& origin = "<config>");
  static RunConfig load(const std::string& path);

  // Throws InvalidArgument("unknown-key") for keys outside config_keys().
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  // Explicit value or the key's default.
  std::string get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  ModelConfig model_config() const;
  TrainConfig train_config() const;

  // Every known key with its effective value; parsing the output yields the
  // same resolved config.
  void write_resolved(std::ostream& out) const;

  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fewseg
