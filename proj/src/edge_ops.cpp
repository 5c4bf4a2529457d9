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

#include "thermfill/edge_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace thermfill {

namespace {

using Plane = std::vector<double>;

std::array<double, kCannyKernel> gaussian_taps() {
  std::array<double, kCannyKernel> taps{};
  double total = 0.0;
  const int half = kCannyKernel / 2;
  for (int i = 0; i < kCannyKernel; ++i) {
    const double d = i - half;
    taps[i] = std::exp(-d * d / (2.0 * kCannySigma * kCannySigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable 5x5 Gaussian with replicated border.
Plane smooth(const Plane& src, int h, int w) {
  static const auto taps = gaussian_taps();
  const int half = kCannyKernel / 2;
  Plane tmp(src.size());
  Plane out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kCannyKernel; ++k) {
        const int sx = std::clamp(x + k - half, 0, w - 1);
        acc += taps[k] * src[static_cast<std::size_t>(y) * w + sx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kCannyKernel; ++k) {
        const int sy = std::clamp(y + k - half, 0, h - 1);
        acc += taps[k] * tmp[static_cast<std::size_t>(sy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

EdgeMap canny(const ImageTensor& image, double low_threshold,
              double high_threshold) {
  if (!(low_threshold >= 0.0 && low_threshold < high_threshold &&
        high_threshold <= 255.0)) {
    throw ValidationError("canny thresholds must satisfy 0 <= low < high <= 255");
  }
  const int h = image.height();
  const int w = image.width();
  EdgeMap edges(h, w, 0);
  if (h < 3 || w < 3) return edges;

  // Work on the 8-bit scale relative to the darkest pixel; only differences
  // matter downstream.
  const double floor = *std::min_element(image.values().begin(), image.values().end());
  Plane level(image.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    level[i] = image[i] * 255.0 - floor * 255.0;
  }
  const Plane s = smooth(level, h, w);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return s[static_cast<std::size_t>(y) * w + x];
  };

  Plane gx(s.size()), gy(s.size()), mag(s.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
      const double dy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = dx;
      gy[i] = dy;
      mag[i] = std::hypot(dx, dy);
    }
  }

  // tan(22.5 deg) splits the four direction sectors.
  constexpr double kTan22 = 0.41421356237309503;
  Plane thin(s.size(), 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = mag[i];
      if (m == 0.0) continue;
      const double ax = std::fabs(gx[i]);
      const double ay = std::fabs(gy[i]);
      int dy = 0;
      int dx = 0;
      if (ay <= ax * kTan22) {
        dx = 1;
      } else if (ax <= ay * kTan22) {
        dy = 1;
      } else if (gx[i] * gy[i] > 0) {
        dx = 1;
        dy = 1;
      } else {
        dx = -1;
        dy = 1;
      }
      const double behind = mag[static_cast<std::size_t>(y - dy) * w + (x - dx)];
      const double ahead = mag[static_cast<std::size_t>(y + dy) * w + (x + dx)];
      if (m > behind && m >= ahead) thin[i] = m;
    }
  }

  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < thin.size(); ++i) {
    if (thin[i] >= high_threshold) {
      edges[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const int y = static_cast<int>(i / w);
    const int x = static_cast<int>(i % w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 1 || ny >= h - 1 || nx < 1 || nx >= w - 1) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (edges[j] == 0 && thin[j] >= low_threshold && thin[j] > 0.0) {
          edges[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return edges;
}

EdgeMap binarize(const ProbabilityMap& raw, double t0) {
  EdgeMap out(raw.height(), raw.width());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = binarize(raw[i], t0);
  return out;
}

ProbabilityMap to_probability(const EdgeMap& edges) {
  ProbabilityMap out(edges.height(), edges.width());
  for (std::size_t i = 0; i < edges.size(); ++i) out[i] = edges[i];
  return out;
}

EdgeMap input_edges(const ImageTensor& masked_image, const Mask& mask,
                    bool mask_edges, double low, double high) {
  require_same_size(masked_image, mask, "input_edges");
  EdgeMap edges = canny(masked_image, low, high);
  if (mask_edges) {
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (mask[i] == 0) edges[i] = 0;
    }
  }
  return edges;
}

}  // namespace thermfill
