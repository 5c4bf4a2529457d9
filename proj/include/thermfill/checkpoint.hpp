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

// Self-describing tensor archive.
//
// Layout (little endian):
//   "TIRFILL-CKPT-1\n"
//   u64 header length, header as compact JSON with sorted keys
//   per tensor: u32 name length, name, 4 x i32 shape (n, c, h, w), data
// The header's "dtype" is "f32" (default) or "f64".

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "thermfill/networks.hpp"

namespace thermfill {

inline constexpr std::string_view kCheckpointMagic = "TIRFILL-CKPT-1";

enum class Precision { f32, f64 };

struct NamedTensor {
  std::string name;
  nn::Tensor value;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const nn::Tensor* find(const std::string& name) const;
  void add(std::string name, nn::Tensor value);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt,
                                            Precision precision);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes through a temporary file and renames, so readers never see a
// partial archive.
void write_checkpoint(const std::filesystem::path& path,
                      const Checkpoint& ckpt, Precision precision);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Adds every tensor of every network as "<prefix>.<name>" and records the
// network config under header["network"].
void store_bundle(Checkpoint& ckpt, const nn::ModelBundle& bundle);
// Overwrites bundle tensors from the archive; every name must be present
// with a matching shape. A non-empty `prefixes` limits the restore to those
// networks.
void restore_bundle(const Checkpoint& ckpt, nn::ModelBundle& bundle,
                    const std::vector<std::string>& prefixes = {});
std::unique_ptr<nn::ModelBundle> load_bundle(const Checkpoint& ckpt);
std::unique_ptr<nn::ModelBundle> load_bundle(const std::filesystem::path& path);

// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace thermfill
