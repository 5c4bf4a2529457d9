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

#include "thermfill/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace thermfill {

// ---- buckets -------------------------------------------------------------------

const std::array<MaskBucket, kBucketCount>& mask_buckets() {
  // Literal bounds: 0.1 * 3 != 0.3 in binary floating point.
  static const std::array<MaskBucket, kBucketCount> kBuckets = {{
      {0.01, 0.1, false},
      {0.1, 0.2, false},
      {0.2, 0.3, false},
      {0.3, 0.4, false},
      {0.4, 0.5, false},
      {0.5, 0.6, true},
  }};
  return kBuckets;
}

std::string MaskBucket::label() const {
  auto pct = [](double v) {
    return std::to_string(static_cast<int>(std::lround(v * 100.0)));
  };
  return (lower == 0.01 ? std::string("1") : pct(lower)) + "-" + pct(upper) +
         "%";
}

std::optional<std::size_t> bucket_index(double ratio) {
  const auto& buckets = mask_buckets();
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (buckets[i].contains(ratio)) return i;
  }
  return std::nullopt;
}

// ---- images --------------------------------------------------------------------

ImageTensor raster_to_image(const io::Raster& raster) {
  if (raster.height <= 0 || raster.width <= 0) {
    throw ValidationError("zero-sized image");
  }
  const double max_level = raster.bit_depth == 16 ? 65535.0 : 255.0;
  ImageTensor out(raster.height, raster.width);
  const int ch = raster.channels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint16_t* px = raster.samples.data() + i * ch;
    double v = 0.0;
    if (ch == 1 || ch == 2) {
      v = px[0] / max_level;
    } else {
      v = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / max_level;
    }
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

ImageTensor load_tir_image(const std::filesystem::path& path) {
  return raster_to_image(io::read_raster(path));
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  if (image.empty()) throw ValidationError("resize of empty image");
  if (height <= 0 || width <= 0) {
    throw ValidationError("resize target must be positive");
  }
  const int sh = image.height();
  const int sw = image.width();
  struct Tap {
    int i0, i1;
    double t;
  };
  auto taps = [](int dst, int src) {
    std::vector<Tap> out(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / dst;
    for (int d = 0; d < dst; ++d) {
      double s = (d + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, src - 1);
      out[static_cast<std::size_t>(d)] = {i0, i1, s - i0};
    }
    return out;
  };
  const auto ty = taps(height, sh);
  const auto tx = taps(width, sw);
  // a + (b - a) * t reproduces a exactly when a == b or t == 0.
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  ImageTensor out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      const double top = lerp(image.at(vy.i0, vx.i0), image.at(vy.i0, vx.i1), vx.t);
      const double bot = lerp(image.at(vy.i1, vx.i0), image.at(vy.i1, vx.i1), vx.t);
      out.at(y, x) = std::clamp(lerp(top, bot, vy.t), 0.0, 1.0);
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& image, int top, int left, int height,
                 int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 ||
      top + height > image.height() || left + width > image.width()) {
    throw ValidationError("crop window outside image");
  }
  ImageTensor out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = image.at(top + y, left + x);
  }
  return out;
}

ImageTensor train_preprocess(const ImageTensor& image, Rng& rng,
                             const TrainCropOptions& options) {
  if (image.height() < kMinTrainSide || image.width() < kMinTrainSide) {
    throw ValidationError("training image must be at least " +
                          std::to_string(kMinTrainSide) + "x" +
                          std::to_string(kMinTrainSide));
  }
  const int shorter = std::min(image.height(), image.width());
  const double fraction = options.forced_fraction
                              ? *options.forced_fraction
                              : rng.uniform(options.min_crop_fraction, 1.0);
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("crop fraction must lie in (0, 1]");
  }
  const int side = std::clamp(static_cast<int>(std::lround(fraction * shorter)),
                              1, shorter);
  const int top = rng.uniform_int(0, image.height() - side);
  const int left = rng.uniform_int(0, image.width() - side);
  return resize_bilinear(crop(image, top, left, side, side),
                         options.output_size, options.output_size);
}

ImageTensor test_preprocess(const ImageTensor& image) {
  ImageTensor resized =
      resize_bilinear(image, kTestResizeHeight, kTestResizeWidth);
  return crop(resized, (kTestResizeHeight - kTestCropSize) / 2,
              (kTestResizeWidth - kTestCropSize) / 2, kTestCropSize,
              kTestCropSize);
}

// ---- masks ---------------------------------------------------------------------

double mask_ratio(const Mask& mask) {
  if (mask.empty()) throw ValidationError("mask_ratio of empty mask");
  const auto holes = std::count(mask.values().begin(), mask.values().end(),
                                std::uint8_t{0});
  return static_cast<double>(holes) / static_cast<double>(mask.size());
}

ImageTensor apply_mask(const ImageTensor& image, const Mask& mask) {
  require_same_size(image, mask, "apply_mask");
  ImageTensor out = image;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] == 0) out[i] = 0.0;
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("resize target must be positive");
  }
  if (mask.same_size(height, width)) return mask;
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<long>(y) * mask.height() / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(static_cast<long>(x) * mask.width() / width);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Mask threshold_mask(const ImageTensor& gray, MaskPolarity polarity) {
  Mask raw(gray.height(), gray.width());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const bool white = gray[i] >= 0.5;
    const bool valid = polarity == MaskPolarity::white_is_valid ? white : !white;
    raw[i] = valid ? 1 : 0;
  }
  return raw;
}

Mask load_mask(const std::filesystem::path& path, int height, int width,
               MaskPolarity polarity) {
  return resize_nearest(threshold_mask(load_tir_image(path), polarity), height,
                        width);
}

namespace {

class StrokePainter {
 public:
  explicit StrokePainter(Mask& mask) : mask_(mask) {}

  std::size_t holes() const { return holes_; }

  // Clears every pixel whose centre lies within `radius` of segment a-b.
  void segment(double ax, double ay, double bx, double by, double radius) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - radius)));
    const int x1 = std::min(mask_.width() - 1,
                            static_cast<int>(std::ceil(std::max(ax, bx) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - radius)));
    const int y1 = std::min(mask_.height() - 1,
                            static_cast<int>(std::ceil(std::max(ay, by) + radius)));
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5 - ax;
        const double py = y + 0.5 - ay;
        double t = len2 > 0 ? (px * dx + py * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = px - t * dx;
        const double ey = py - t * dy;
        if (ex * ex + ey * ey <= r2 && mask_.at(y, x) == 1) {
          mask_.at(y, x) = 0;
          ++holes_;
        }
      }
    }
  }

 private:
  Mask& mask_;
  std::size_t holes_ = 0;
};

}  // namespace

Mask generate_stroke_mask(Rng& rng, const MaskBucket& bucket, int height,
                          int width, int max_attempts) {
  if (height <= 0 || width <= 0) {
    throw ValidationError("mask size must be positive");
  }
  if (!(bucket.lower >= 0.0 && bucket.lower < bucket.upper && bucket.upper <= 1.0)) {
    throw ValidationError("invalid mask ratio range " + bucket.label());
  }
  const double pixels = static_cast<double>(height) * width;
  const double max_radius = std::max(1.0, std::min(height, width) / 10.0);
  constexpr int kMaxStrokes = 10000;

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Mask mask(height, width, 1);
    StrokePainter painter(mask);
    const double target = rng.uniform(bucket.lower, bucket.upper) * pixels;

    for (int stroke = 0; stroke < kMaxStrokes &&
                         static_cast<double>(painter.holes()) < target;
         ++stroke) {
      // Shrink the brush as the remaining budget shrinks.
      const double remaining = target - static_cast<double>(painter.holes());
      const double budget_radius = std::sqrt(remaining / (4.0 * std::numbers::pi));
      const double cap = std::max(0.5, std::min(max_radius, budget_radius));
      const double radius = rng.uniform(0.5, 1.0) * cap;
      double x = rng.uniform(0.0, width);
      double y = rng.uniform(0.0, height);
      if (rng.uniform() < 0.2) {
        painter.segment(x, y, x, y, radius * 1.5);
        continue;
      }
      const int vertices = rng.uniform_int(1, 5);
      double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int v = 0; v < vertices; ++v) {
        angle += rng.uniform(-0.8, 0.8);
        const double length = rng.uniform(1.0, 4.0) * radius + 1.0;
        const double nx = std::clamp(x + length * std::cos(angle), 0.0,
                                     static_cast<double>(width));
        const double ny = std::clamp(y + length * std::sin(angle), 0.0,
                                     static_cast<double>(height));
        painter.segment(x, y, nx, ny, radius);
        x = nx;
        y = ny;
        if (static_cast<double>(painter.holes()) >= target) break;
      }
    }
    if (bucket.contains(mask_ratio(mask))) return mask;
  }
  throw GenerationError("could not reach mask bucket " + bucket.label() +
                        " on a " + std::to_string(height) + "x" +
                        std::to_string(width) + " grid after " +
                        std::to_string(max_attempts) + " attempts");
}

// ---- manifests -----------------------------------------------------------------

DatasetManifest DatasetManifest::load(const std::filesystem::path& path,
                                      Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  DatasetManifest manifest;
  manifest.split = split;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    line = line.substr(first);
    ManifestEntry entry;
    const auto tab = line.find('\t');
    entry.image = base / line.substr(0, tab);
    if (tab != std::string::npos) {
      std::string mask = line.substr(tab + 1);
      while (!mask.empty() && (mask.back() == ' ' || mask.back() == '\t')) {
        mask.pop_back();
      }
      if (!mask.empty()) entry.mask = base / mask;
    }
    if (!std::filesystem::exists(entry.image)) {
      throw IoError("manifest entry does not exist: " + entry.image.string());
    }
    if (entry.mask && !std::filesystem::exists(*entry.mask)) {
      throw IoError("manifest mask does not exist: " + entry.mask->string());
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

}  // namespace thermfill
