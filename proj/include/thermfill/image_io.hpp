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

// Raster codecs (PNG, TIFF) behind a small value-typed interface.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "thermfill/image.hpp"

namespace thermfill::io {

using Bytes = std::vector<std::uint8_t>;

// Decoded raster with interleaved samples in RGB(A) order.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

Raster read_raster(const std::filesystem::path& path);
Raster decode_raster(std::span<const std::uint8_t> bytes);

// Width and height from a PNG header without decoding pixel data.
std::optional<std::pair<int, int>> png_dimensions(
    std::span<const std::uint8_t> bytes);

// 8-bit grayscale PNG; intensities are rounded to the nearest level.
Bytes encode_png(const ImageTensor& image);
// 0 -> black, 1 -> white.
Bytes encode_png(const Mask& mask);
Bytes encode_png(const EdgeMap& edges);

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
Bytes read_file(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageTensor& image);
void write_png(const std::filesystem::path& path, const Mask& mask);
void write_png(const std::filesystem::path& path, const EdgeMap& edges);

// Writes a raw raster (grayscale 8/16-bit PNG or TIFF, chosen by extension).
void write_raster(const std::filesystem::path& path, const Raster& raster);

}  // namespace thermfill::io
