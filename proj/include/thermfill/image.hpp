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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thermfill/errors.hpp"
#include "thermfill/tensor.hpp"

namespace thermfill {

// Row-major 2-D grid; the tag keeps images, masks and edge maps apart.
template <class T, class Tag>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height),
        width_(width),
        values_(checked_size(height, width), fill) {}
  Grid(int height, int width, std::vector<T> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != checked_size(height, width)) {
      throw ValidationError("grid data does not match " +
                            std::to_string(height) + "x" +
                            std::to_string(width));
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  T at(int y, int x) const {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return values_[i]; }
  T operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool same_size(int h, int w) const { return h == height_ && w == width_; }
  template <class U, class V>
  bool same_size(const Grid<U, V>& other) const {
    return same_size(other.height(), other.width());
  }

  bool operator==(const Grid&) const = default;

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 0 || w < 0) throw ValidationError("negative grid extent");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> values_;
};

struct ImageTag {};
struct MaskTag {};
struct EdgeTag {};

// Single-channel TIR intensities in [0, 1].
class ImageTensor : public Grid<double, ImageTag> {
 public:
  using Grid::Grid;
  int channels() const { return 1; }
};

// 1 = valid pixel, 0 = hole.
using Mask = Grid<std::uint8_t, MaskTag>;

// Binary edge map, 1 = edge.
using EdgeMap = Grid<std::uint8_t, EdgeTag>;

// Throws ValidationError unless every value lies in [0, 1].
void validate_range(const ImageTensor& image);
// Throws ValidationError unless every value is 0 or 1.
void validate_binary(const Mask& mask);
void validate_binary(const EdgeMap& edges);

template <class A, class B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (!a.same_size(b)) {
    throw ValidationError(std::string(what) + ": size mismatch " +
                          std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " +
                          std::to_string(b.height()) + "x" +
                          std::to_string(b.width()));
  }
}

// ---- tensor bridges -----------------------------------------------------------

// Stacks same-sized grids into an [n, 1, h, w] tensor.
nn::Tensor stack(std::span<const ImageTensor> images);
nn::Tensor stack(std::span<const Mask> masks);
nn::Tensor stack(std::span<const EdgeMap> edges);

ImageTensor image_from_tensor(const nn::Tensor& t, int n = 0, int c = 0);
// Values >= 0.5 become 1.
EdgeMap edges_from_tensor(const nn::Tensor& t, int n = 0, int c = 0);

}  // namespace thermfill
