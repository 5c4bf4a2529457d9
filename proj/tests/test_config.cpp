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

#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "thermfill/config.hpp"
#include "thermfill/errors.hpp"

using namespace thermfill;

TEST_CASE("defaults follow the published settings") {
  const TrainConfig c;
  CHECK(c.lr_edge == 1e-3);
  CHECK(c.lr_completion == 1e-4);
  CHECK(c.lr_refinement == 1e-4);
  CHECK(c.canny_low == 80.0);
  CHECK(c.canny_high == 160.0);
  CHECK(c.network.input_size == 256);
}

TEST_CASE("parse, apply and dump") {
  const ConfigValues v = parse_config_text(
      "# comment\n\nbase_width = 16\n eag_enabled=false \nlr_edge = 2.5e-4\n"
      "mask_mode = files\nbase_width = 32\n");
  TrainConfig c;
  apply_config(c, v);
  CHECK(c.network.base_width == 32);
  CHECK_FALSE(c.network.eag_enabled);
  CHECK(c.lr_edge == 2.5e-4);
  CHECK(c.mask_mode == MaskMode::files);

  TrainConfig round;
  apply_config(round, parse_config_text(dump_config(c)));
  CHECK(dump_config(round) == dump_config(c));
  CHECK(round.to_json() == c.to_json());
}

TEST_CASE("every key is documented and round-trips") {
  for (const auto& k : config_keys()) {
    CAPTURE(k.name);
    CHECK_FALSE(k.help.empty());
    TrainConfig c;
    k.set(c, k.get(c));
    CHECK(k.get(c) == k.get(TrainConfig{}));
  }
}

TEST_CASE("errors name the key or line") {
  TrainConfig c;
  auto message = [&](const std::string& text) {
    try {
      apply_config(c, parse_config_text(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("bogus = 1").find("bogus") != std::string::npos);
  CHECK(message("depth = six").find("depth") != std::string::npos);
  CHECK(message("eag_enabled = maybe").find("eag_enabled") != std::string::npos);
  CHECK(message("mask_mode = random").find("mask_mode") != std::string::npos);
  CHECK(message("a\nno equals sign").find("line 1") != std::string::npos);
}

TEST_CASE("relative paths resolve against the config file") {
  testing::TempDir dir;
  std::ofstream(dir / "run.cfg") << "manifest = data/list.txt\ncheckpoint_dir = /abs/ckpt\n";
  const ConfigValues v = read_config_file(dir / "run.cfg");
  CHECK(v.at("manifest") == (dir.path() / "data/list.txt").string());
  CHECK(v.at("checkpoint_dir") == "/abs/ckpt");
  CHECK_THROWS_AS(read_config_file(dir / "missing.cfg"), ConfigError);
}
