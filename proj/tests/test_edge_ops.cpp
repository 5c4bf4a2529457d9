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

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "thermfill/edge_ops.hpp"
#include "thermfill/errors.hpp"

using namespace thermfill;

namespace {

std::size_t count(const EdgeMap& e) {
  return std::accumulate(e.values().begin(), e.values().end(), std::size_t{0});
}

}  // namespace

TEST_CASE("constant image has no edges") {
  CHECK(count(canny(ImageTensor(32, 32, 0.4))) == 0);
}

TEST_CASE("vertical step gives one thin vertical line") {
  const int k = 16;
  ImageTensor img(32, 32, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = k; x < 32; ++x) img.at(y, x) = 1.0;
  const EdgeMap e = canny(img);
  // Away from the frame every row has exactly one edge pixel beside the step.
  for (int y = 2; y < 30; ++y) {
    int hits = 0;
    for (int x = 0; x < 32; ++x) {
      if (e.at(y, x)) {
        ++hits;
        CHECK(std::abs(x - k) <= 1);
      }
    }
    CHECK(hits == 1);
  }
}

TEST_CASE("raising thresholds never adds edges") {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const ImageTensor img = testing::smooth_tir(64, 64, s);
    Rng rng(s);
    ImageTensor noisy = img;
    for (auto& v : noisy.values()) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
    CHECK(count(canny(noisy, 200, 250)) <= count(canny(noisy, 80, 160)));
    CHECK(count(canny(noisy, 80, 160)) <= count(canny(noisy, 40, 80)));
  }
}

TEST_CASE("canny is deterministic") {
  const ImageTensor img = testing::smooth_tir(48, 40, 3);
  CHECK(canny(img) == canny(img));
}

TEST_CASE("binarize is a unit step closed at the threshold") {
  CHECK(binarize(0.4) == 0);
  CHECK(binarize(0.5) == 1);
  CHECK(binarize(0.6) == 1);
  CHECK(binarize(0.3, 0.3) == 1);
  ProbabilityMap p(2, 2, 0.49);
  p[1] = 0.5;
  const EdgeMap e = binarize(p);
  CHECK(e[0] == 0);
  CHECK(e[1] == 1);
  CHECK(binarize(to_probability(e)) == e);
}

TEST_CASE("recompose splices exactly") {
  Rng rng(1);
  const ImageTensor a = testing::random_image(8, 8, rng);
  const ImageTensor b = testing::random_image(8, 8, rng);
  CHECK(recompose(apply_mask(a, Mask(8, 8, 1)), b, Mask(8, 8, 1)) == a);
  CHECK(recompose(apply_mask(a, Mask(8, 8, 0)), b, Mask(8, 8, 0)) == b);
  Mask half(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) half.at(y, x) = 0;
  const ImageTensor out = recompose(apply_mask(a, half), b, half);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(out.at(y, x) == (x < 4 ? a.at(y, x) : b.at(y, x)));
  CHECK_THROWS_AS(recompose(a, b, Mask(8, 7, 1)), ValidationError);
}

TEST_CASE("input edges are cleared inside holes") {
  const ImageTensor img = testing::smooth_tir(64, 64, 4);
  const Mask m = testing::stroke_mask(64, 64, 0.2, 0.3, 4);
  const ImageTensor broken = apply_mask(img, m);
  const EdgeMap masked = input_edges(broken, m, true);
  const EdgeMap raw = input_edges(broken, m, false);
  CHECK(raw == canny(broken));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) CHECK(masked[i] == 0);
    if (m[i] == 1) CHECK(masked[i] == raw[i]);
  }
}
