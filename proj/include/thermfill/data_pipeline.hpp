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

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thermfill/image.hpp"
#include "thermfill/image_io.hpp"
#include "thermfill/rng.hpp"

namespace thermfill {

// Half-open hole-ratio interval [lower, upper). The top bucket also takes
// its upper edge so the six buckets cover [0.01, 0.60] completely.
struct MaskBucket {
  double lower = 0.0;
  double upper = 0.0;
  bool closed_top = false;

  bool contains(double ratio) const {
    return ratio >= lower && (ratio < upper || (closed_top && ratio == upper));
  }
  std::string label() const;  // e.g. "10-20%"
  bool operator==(const MaskBucket&) const = default;
};

inline constexpr std::size_t kBucketCount = 6;
const std::array<MaskBucket, kBucketCount>& mask_buckets();
// Index into mask_buckets(), or nullopt outside [0.01, 0.60].
std::optional<std::size_t> bucket_index(double ratio);

// ---- images -------------------------------------------------------------------

// Grayscale or RGB PNG/TIFF -> [0, 1] single channel. RGB uses BT.601 luma;
// 16-bit data is scaled by 65535 (the container range), never per-image.
ImageTensor load_tir_image(const std::filesystem::path& path);
ImageTensor raster_to_image(const io::Raster& raster);

// Half-pixel-centred bilinear resampling.
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);
ImageTensor crop(const ImageTensor& image, int top, int left, int height,
                 int width);

struct TrainCropOptions {
  int output_size = 256;
  double min_crop_fraction = 0.5;
  std::optional<double> forced_fraction;  // bypasses sampling when set
};

inline constexpr int kMinTrainSide = 64;

// Random square crop (side = fraction * shorter side, position uniform), then
// bilinear resize to output_size.
ImageTensor train_preprocess(const ImageTensor& image, Rng& rng,
                             const TrainCropOptions& options = {});

inline constexpr int kTestResizeHeight = 300;
inline constexpr int kTestResizeWidth = 375;
inline constexpr int kTestCropSize = 256;

// Resize to 300x375 then centre-crop 256x256.
ImageTensor test_preprocess(const ImageTensor& image);

// ---- masks -------------------------------------------------------------------

enum class MaskPolarity { white_is_valid, white_is_hole };

// Random thick polylines and discs until the hole ratio lands in `bucket`.
// Throws GenerationError after `max_attempts` failed restarts.
Mask generate_stroke_mask(Rng& rng, const MaskBucket& bucket, int height,
                          int width, int max_attempts = 64);

// Intensities >= 0.5 are white.
Mask threshold_mask(const ImageTensor& gray,
                    MaskPolarity polarity = MaskPolarity::white_is_valid);
Mask load_mask(const std::filesystem::path& path, int height, int width,
               MaskPolarity polarity = MaskPolarity::white_is_valid);

Mask resize_nearest(const Mask& mask, int height, int width);

// Fraction of hole (zero) entries.
double mask_ratio(const Mask& mask);

// Elementwise image * mask; holes become exactly 0.
ImageTensor apply_mask(const ImageTensor& image, const Mask& mask);

// ---- manifests ----------------------------------------------------------------

enum class Split { train, test };

struct ManifestEntry {
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
};

// Newline-delimited list of image paths relative to the manifest file. An
// optional tab-separated second column names a mask file. Blank lines and
// lines starting with '#' are ignored.
struct DatasetManifest {
  Split split = Split::train;
  std::vector<ManifestEntry> entries;

  std::size_t count() const { return entries.size(); }

  static DatasetManifest load(const std::filesystem::path& path, Split split);
};

}  // namespace thermfill
