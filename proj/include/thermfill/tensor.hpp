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

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace thermfill::nn {

// NCHW extents of a dense activation grid.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Allocates on 64-byte boundaries.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  bool operator==(const AlignedAllocator&) const = default;
};

// Dense row-major NCHW buffer of doubles with value semantics. Storage is
// SIMD-aligned so vectorized reductions split work the same way on every run.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  // Pointer to the (n, c) plane.
  double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const double* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  void fill(double v);
  bool all_finite() const;
  // Exact comparison of shape and values.
  bool operator==(const Tensor&) const = default;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }

  Shape shape_;
  std::vector<double, AlignedAllocator<double>> data_;
};

}  // namespace thermfill::nn
