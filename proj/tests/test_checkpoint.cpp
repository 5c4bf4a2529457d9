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

#include "support.hpp"
#include "thermfill/checkpoint.hpp"
#include "thermfill/errors.hpp"

using namespace thermfill;

TEST_CASE("archive round trip at both precisions") {
  Rng rng(1);
  Checkpoint c;
  c.header["note"] = "x";
  c.add("a", testing::random_tensor({2, 3, 4, 5}, rng));
  c.add("b", nn::Tensor({1, 1, 1, 1}, 0.1));

  const auto f64 = encode_checkpoint(c, Precision::f64);
  const Checkpoint d = decode_checkpoint(f64);
  CHECK(d.header["note"] == "x");
  CHECK(d.header["dtype"] == "f64");
  CHECK(*d.find("a") == *c.find("a"));

  const Checkpoint s = decode_checkpoint(encode_checkpoint(c, Precision::f32));
  CHECK(s.find("b")->values()[0] == static_cast<double>(0.1f));
  CHECK(s.find("missing") == nullptr);

  const std::string magic(f64.begin(), f64.begin() + 15);
  CHECK(magic == "TIRFILL-CKPT-1\n");
}

TEST_CASE("corrupt archives are I/O errors") {
  Checkpoint c;
  c.add("a", nn::Tensor({1, 1, 2, 2}, 1.0));
  auto bytes = encode_checkpoint(c, Precision::f32);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), IoError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), IoError);
}

TEST_CASE("bundle round trip through a file") {
  testing::TempDir dir;
  const nn::ModelBundle a(nn::NetworkConfig::tiny(), 5);
  Checkpoint c;
  store_bundle(c, a);
  write_checkpoint(dir / "m.ckpt", c, Precision::f64);
  const auto b = load_bundle(dir / "m.ckpt");
  CHECK(b->config == a.config);
  const auto sa = a.parameter_sets();
  const auto sb = b->parameter_sets();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].second->snapshot() == sb[i].second->snapshot());
  }
  CHECK(file_sha256(dir / "m.ckpt") == sha256_hex(testing::read_bytes(dir / "m.ckpt")));
}

TEST_CASE("restore is strict about architecture") {
  const nn::ModelBundle a(nn::NetworkConfig::tiny(), 1);
  Checkpoint c;
  store_bundle(c, a);
  nn::NetworkConfig wide = nn::NetworkConfig::tiny();
  wide.base_width = 16;
  nn::ModelBundle b(wide, 1);
  CHECK_THROWS(restore_bundle(c, b));
  // A prefix subset only touches the named networks.
  nn::ModelBundle d(nn::NetworkConfig::tiny(), 2);
  restore_bundle(c, d, {"edge_generator"});
  CHECK(d.edge_generator.params().snapshot() == a.edge_generator.params().snapshot());
  CHECK_FALSE(d.completion.params().snapshot() == a.completion.params().snapshot());
}

TEST_CASE("sha256 of a known string") {
  const std::string s = "abc";
  CHECK(sha256_hex(std::vector<std::uint8_t>(s.begin(), s.end())) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
