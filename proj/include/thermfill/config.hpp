// Copyright (c) 2026 The thermfill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat "key = value" configuration files. Blank lines and '#' comments are
// ignored; later assignments win.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "thermfill/training.hpp"

namespace thermfill {

using ConfigValues = std::map<std::string, std::string>;

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

ConfigValues parse_config_text(const std::string& text);
ConfigValues read_config_file(const std::filesystem::path& path);

// Applies values in key order; unknown keys and malformed values throw
// ConfigError naming the key.
void apply_config(TrainConfig& config, const ConfigValues& values);

// One "key = value" line per key.
std::string dump_config(const TrainConfig& config);

}  // namespace thermfill
