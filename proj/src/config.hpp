// Copyright 2026 The diloco-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef DILOCO_CONFIG_HPP_
#define DILOCO_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "engine.hpp"

namespace diloco {

struct ConfigKey {
  std::string name;
  std::string default_value;
  // Keys that change the math a worker performs; part of the config hash.
  bool hashed;
  std::string help;
};

// Every accepted key, in canonical order.
const std::vector<ConfigKey>& config_keys();

std::vector<std::string> preset_names();

// Flat key = value configuration. Values stay textual until resolve().
class ConfigMap {
 public:
  // All keys at their defaults.
  ConfigMap();
  // Defaults with a named preset applied. Throws kConfig for unknown names.
  static ConfigMap preset(std::string_view name);
  // Canonical text of an already resolved config.
  static ConfigMap from_run_config(const RunConfig& cfg);

  // Throws kConfig naming the key if it is unknown.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Lines of `key = value`; `#` starts a comment; blank lines are ignored.
  void merge_text(std::string_view text, const std::string& source = "config");
  // Text config, or a JSON run sidecar (its "config" object).
  void merge_file(const std::string& path);
  void merge_json(std::string_view json, const std::string& source = "json");

  // Parses and validates every key. Errors name the offending key.
  RunConfig resolve() const;

  // One `key = value` line per key in canonical order.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

// FNV-1a over the canonical text of the hashed keys. Workers and the
// coordinator must agree on it before a JOIN is accepted.
std::uint64_t config_hash(const RunConfig& cfg);

std::string_view to_string(DataRegime regime);
std::string_view to_string(TransportKind transport);

}  // namespace diloco

#endif  // DILOCO_CONFIG_HPP_
