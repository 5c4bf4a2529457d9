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

#include "thermfill/image.hpp"

#include <algorithm>
#include <cmath>

namespace thermfill {

void validate_range(const ImageTensor& image) {
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("image value " + std::to_string(v) +
                            " outside [0, 1]");
    }
  }
}

namespace {

template <class G>
void validate_binary_grid(const G& g, const char* what) {
  for (auto v : g.values()) {
    if (v != 0 && v != 1) {
      throw ValidationError(std::string(what) + " value " +
                            std::to_string(static_cast<int>(v)) +
                            " is not binary");
    }
  }
}

template <class G>
nn::Tensor stack_grids(std::span<const G> grids) {
  if (grids.empty()) throw ValidationError("stack: empty batch");
  const int h = grids.front().height();
  const int w = grids.front().width();
  nn::Tensor t({static_cast<int>(grids.size()), 1, h, w});
  for (std::size_t n = 0; n < grids.size(); ++n) {
    require_same_size(grids[n], grids.front(), "stack");
    double* dst = t.plane(static_cast<int>(n), 0);
    const auto src = grids[n].values();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<double>(src[i]);
    }
  }
  return t;
}

}  // namespace

void validate_binary(const Mask& mask) { validate_binary_grid(mask, "mask"); }
void validate_binary(const EdgeMap& edges) {
  validate_binary_grid(edges, "edge map");
}

nn::Tensor stack(std::span<const ImageTensor> images) {
  return stack_grids(images);
}
nn::Tensor stack(std::span<const Mask> masks) { return stack_grids(masks); }
nn::Tensor stack(std::span<const EdgeMap> edges) { return stack_grids(edges); }

ImageTensor image_from_tensor(const nn::Tensor& t, int n, int c) {
  const auto& s = t.shape();
  const double* src = t.plane(n, c);
  return ImageTensor(s.h, s.w, std::vector<double>(src, src + s.plane()));
}

EdgeMap edges_from_tensor(const nn::Tensor& t, int n, int c) {
  const auto& s = t.shape();
  EdgeMap e(s.h, s.w);
  const double* src = t.plane(n, c);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = src[i] >= 0.5 ? 1 : 0;
  return e;
}

}  // namespace thermfill
