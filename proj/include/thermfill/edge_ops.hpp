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

#include "thermfill/image.hpp"

namespace thermfill {

struct ProbabilityTag {};
// Edge generator output, values in [0, 1].
using ProbabilityMap = Grid<double, ProbabilityTag>;

// Thresholds are on the 8-bit intensity scale.
inline constexpr double kCannyLow = 80.0;
inline constexpr double kCannyHigh = 160.0;
inline constexpr double kCannySigma = 1.4;
inline constexpr int kCannyKernel = 5;
inline constexpr double kEdgeThreshold = 0.5;

// Gaussian smoothing (sigma 1.4, 5x5, replicated border), Sobel gradients,
// L2 magnitude, non-maximum suppression over four quantized directions and
// double-threshold hysteresis with 8-connectivity. The one-pixel frame is
// never marked.
EdgeMap canny(const ImageTensor& image, double low_threshold = kCannyLow,
              double high_threshold = kCannyHigh);

// Unit step: value < t0 -> 0, value >= t0 -> 1.
inline std::uint8_t binarize(double value, double t0 = kEdgeThreshold) {
  return value < t0 ? 0 : 1;
}
EdgeMap binarize(const ProbabilityMap& raw, double t0 = kEdgeThreshold);
ProbabilityMap to_probability(const EdgeMap& edges);

// Edges of the broken image, zeroed in the holes when `mask_edges` is set so
// the hole boundary does not register as structure.
EdgeMap input_edges(const ImageTensor& masked_image, const Mask& mask,
                    bool mask_edges = true, double low = kCannyLow,
                    double high = kCannyHigh);

// known + predicted * (1 - mask) for `known` zero in the holes: valid pixels
// copy `known` bit-exactly and holes take `predicted`.
template <class G>
G recompose(const G& known, const G& predicted, const Mask& mask) {
  require_same_size(known, predicted, "recompose");
  require_same_size(known, mask, "recompose");
  G out = known;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] == 0) out[i] = predicted[i];
  }
  return out;
}

}  // namespace thermfill
