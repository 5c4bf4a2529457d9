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

#include "thermfill/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace thermfill::io {

namespace {

Raster from_mat(const cv::Mat& m, const std::string& what) {
  if (m.empty()) throw IoError("cannot decode image: " + what);
  if (m.rows == 0 || m.cols == 0) {
    throw ValidationError("zero-sized image: " + what);
  }
  Raster r;
  r.height = m.rows;
  r.width = m.cols;
  r.channels = m.channels();
  switch (m.depth()) {
    case CV_8U:
      r.bit_depth = 8;
      break;
    case CV_16U:
      r.bit_depth = 16;
      break;
    default:
      throw IoError("unsupported sample depth in " + what);
  }
  if (r.channels != 1 && r.channels != 3 && r.channels != 4) {
    throw IoError("unsupported channel count in " + what);
  }
  r.samples.resize(static_cast<std::size_t>(r.height) * r.width * r.channels);
  std::size_t i = 0;
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < r.channels; ++c) {
        // OpenCV stores colour as BGR(A); expose RGB(A).
        int src_c = c;
        if (r.channels >= 3 && c < 3) src_c = 2 - c;
        if (r.bit_depth == 8) {
          r.samples[i++] = m.ptr<std::uint8_t>(y)[x * r.channels + src_c];
        } else {
          r.samples[i++] = m.ptr<std::uint16_t>(y)[x * r.channels + src_c];
        }
      }
    }
  }
  return r;
}

constexpr int kReadFlags = cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR;

template <class G>
Bytes encode_levels(const G& grid, double scale) {
  cv::Mat m(grid.height(), grid.width(), CV_8UC1);
  for (int y = 0; y < grid.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < grid.width(); ++x) {
      const double v = std::round(static_cast<double>(grid.at(y, x)) * scale);
      row[x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  std::vector<uchar> buf;
  if (!cv::imencode(".png", m, buf)) throw IoError("PNG encoding failed");
  return Bytes(buf.begin(), buf.end());
}

}  // namespace

Raster read_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  cv::Mat m = cv::imread(path.string(), kReadFlags);
  return from_mat(m, path.string());
}

Raster decode_raster(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw IoError("cannot decode image: empty buffer");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat m = cv::imdecode(buf, kReadFlags);
  return from_mat(m, "in-memory buffer");
}

std::optional<std::pair<int, int>> png_dimensions(
    std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P',  'N',  'G',
                                                 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() < 24 || !std::equal(kSignature, kSignature + 8, bytes.data()) ||
      !std::equal(bytes.data() + 12, bytes.data() + 16,
                  reinterpret_cast<const std::uint8_t*>("IHDR"))) {
    return std::nullopt;
  }
  auto be32 = [&](std::size_t at) {
    return (static_cast<std::uint32_t>(bytes[at]) << 24) |
           (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[at + 3]);
  };
  const std::uint32_t w = be32(16);
  const std::uint32_t h = be32(20);
  if (w > 0x7fffffffu || h > 0x7fffffffu) return std::nullopt;
  return std::pair<int, int>{static_cast<int>(w), static_cast<int>(h)};
}

Bytes encode_png(const ImageTensor& image) { return encode_levels(image, 255.0); }
Bytes encode_png(const Mask& mask) { return encode_levels(mask, 255.0); }
Bytes encode_png(const EdgeMap& edges) { return encode_levels(edges, 255.0); }

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  write_file(path, encode_png(image));
}
void write_png(const std::filesystem::path& path, const Mask& mask) {
  write_file(path, encode_png(mask));
}
void write_png(const std::filesystem::path& path, const EdgeMap& edges) {
  write_file(path, encode_png(edges));
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1) {
    throw ValidationError("write_raster: only grayscale rasters are supported");
  }
  const int type = raster.bit_depth == 16 ? CV_16UC1 : CV_8UC1;
  cv::Mat m(raster.height, raster.width, type);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const auto v = raster.samples[static_cast<std::size_t>(y) * raster.width + x];
      if (type == CV_16UC1) {
        m.ptr<std::uint16_t>(y)[x] = v;
      } else {
        m.ptr<std::uint8_t>(y)[x] = static_cast<std::uint8_t>(v);
      }
    }
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), m)) {
    throw IoError("cannot write raster: " + path.string());
  }
}

}  // namespace thermfill::io
