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

#include "thermfill/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "thermfill/errors.hpp"

namespace thermfill {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

#define NUM_KEY(KEY, FIELD, HELP)                                         \
  ConfigKey {                                                             \
    KEY, HELP,                                                            \
        [](TrainConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }, \
        [](const TrainConfig& c) { return fmt(c.FIELD); }                 \
  }
#define INT_KEY(KEY, FIELD, HELP)                                               \
  ConfigKey {                                                                   \
    KEY, HELP,                                                                  \
        [](TrainConfig& c, const std::string& v) {                              \
          c.FIELD = to_int<decltype(c.FIELD)>(KEY, v);                          \
        },                                                                      \
        [](const TrainConfig& c) { return std::to_string(c.FIELD); }            \
  }
#define BOOL_KEY(KEY, FIELD, HELP)                                            \
  ConfigKey {                                                                 \
    KEY, HELP,                                                                \
        [](TrainConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); }, \
        [](const TrainConfig& c) { return fmt(c.FIELD); }                     \
  }
#define PATH_KEY(KEY, FIELD, HELP)                                             \
  ConfigKey {                                                                  \
    KEY, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = v; },       \
        [](const TrainConfig& c) { return c.FIELD.string(); }                  \
  }

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      INT_KEY("base_width", network.base_width, "generator base channel width"),
      INT_KEY("depth", network.depth, "EAG ResBlocks in the completion network"),
      INT_KEY("edge_depth", network.edge_depth, "residual blocks in the edge generator"),
      BOOL_KEY("eag_enabled", network.eag_enabled, "edge-aware modulation in the completion network"),
      BOOL_KEY("gated_enabled", network.gated_enabled, "gating branch in the refinement network"),
      INT_KEY("input_size", network.input_size, "training crop side"),
      INT_KEY("eag_hidden", network.eag_hidden, "hidden width of the EAG projection"),
      INT_KEY("disc_width", network.disc_width, "discriminator base width"),
      INT_KEY("disc_downsamples", network.disc_downsamples, "stride-2 discriminator layers"),
      NUM_KEY("lr_edge", lr_edge, "edge stage learning rate"),
      NUM_KEY("lr_completion", lr_completion, "completion stage learning rate"),
      NUM_KEY("lr_refinement", lr_refinement, "refinement stage learning rate"),
      NUM_KEY("adam_beta1", adam_beta1, "Adam beta1"),
      NUM_KEY("adam_beta2", adam_beta2, "Adam beta2"),
      NUM_KEY("adam_eps", adam_eps, "Adam epsilon"),
      INT_KEY("batch_size", batch_size, "images per step"),
      INT_KEY("steps_edge", steps_edge, "edge stage steps"),
      INT_KEY("steps_completion", steps_completion, "completion stage steps"),
      INT_KEY("steps_refinement", steps_refinement, "refinement stage steps"),
      INT_KEY("seed", seed, "random seed"),
      BOOL_KEY("deterministic", deterministic, "64-bit checkpoints for exact resume"),
      BOOL_KEY("joint_finetune", joint_finetune, "refinement stage also updates the completion network"),
      BOOL_KEY("mask_input_edges", mask_input_edges, "zero input edges inside holes"),
      NUM_KEY("canny_low", canny_low, "canny low threshold (8-bit scale)"),
      NUM_KEY("canny_high", canny_high, "canny high threshold (8-bit scale)"),
      NUM_KEY("w_l1", loss.l1, "l1 weight"),
      NUM_KEY("w_perc", loss.perceptual, "perceptual weight"),
      NUM_KEY("w_style", loss.style, "style weight"),
      NUM_KEY("w_adv", loss.adversarial, "refinement adversarial weight"),
      NUM_KEY("edge_l1_weight", loss.edge_l1, "optional l1 term for the edge generator"),
      INT_KEY("extractor_width_divisor", extractor_width_divisor, "divide VGG widths (random extractor only)"),
      INT_KEY("checkpoint_every", checkpoint_every, "steps between checkpoints, 0 = stage end"),
      ConfigKey{"mask_mode", "buckets or files",
                [](TrainConfig& c, const std::string& v) {
                  if (v == "buckets") {
                    c.mask_mode = MaskMode::buckets;
                  } else if (v == "files") {
                    c.mask_mode = MaskMode::files;
                  } else {
                    throw ConfigError("mask_mode: expected buckets or files, got '" + v + "'");
                  }
                },
                [](const TrainConfig& c) {
                  return std::string(c.mask_mode == MaskMode::buckets ? "buckets" : "files");
                }},
      BOOL_KEY("resume", resume, "continue from an existing stage checkpoint"),
      PATH_KEY("checkpoint_dir", checkpoint_dir, "directory for checkpoints and the loss log"),
      PATH_KEY("manifest", manifest, "training manifest"),
  };
  return keys;
}

ConfigValues parse_config_text(const std::string& text) {
  ConfigValues out;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) +
                        ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(number) + ": empty key");
    }
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ConfigValues v = parse_config_text(ss.str());
  // Relative paths inside the file resolve against the file's directory.
  for (const char* key : {"checkpoint_dir", "manifest"}) {
    auto it = v.find(key);
    if (it != v.end() && !it->second.empty() &&
        std::filesystem::path(it->second).is_relative()) {
      it->second = (path.parent_path() / it->second).string();
    }
  }
  return v;
}

void apply_config(TrainConfig& config, const ConfigValues& values) {
  const auto& keys = config_keys();
  for (const auto& [k, v] : values) {
    auto it = std::find_if(keys.begin(), keys.end(),
                           [&](const ConfigKey& key) { return key.name == k; });
    if (it == keys.end()) throw ConfigError("unknown config key '" + k + "'");
    it->set(config, v);
  }
}

std::string dump_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace thermfill
