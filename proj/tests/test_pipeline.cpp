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

#include "support.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/pipeline.hpp"

using namespace thermfill;

namespace {

std::shared_ptr<const nn::ModelBundle> tiny_model(std::uint64_t seed = 1) {
  return std::make_shared<nn::ModelBundle>(nn::NetworkConfig::tiny(), seed);
}

}  // namespace

TEST_CASE("all-keep mask returns the input exactly") {
  const Inpainter p(tiny_model());
  const ImageTensor img = testing::smooth_tir(32, 40, 1);
  const InpaintResult r = p.run(img, Mask(32, 40, 1));
  CHECK(r.result == img);
  CHECK(r.coarse == img);
  CHECK_FALSE(r.padded);
}

TEST_CASE("valid pixels survive every stage bit-exactly") {
  const Inpainter p(tiny_model());
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    const ImageTensor img = testing::random_image(24, 28, rng);
    const Mask m = testing::random_mask(24, 28, rng, 0.3);
    const InpaintResult r = p.run(img, m);
    const EdgeMap c_in = input_edges(apply_mask(img, m), m);
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k] == 0) continue;
      CHECK(r.result[k] == img[k]);
      CHECK(r.coarse[k] == img[k]);
      CHECK(r.edges[k] == c_in[k]);
    }
    for (double v : r.result.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("hole content of the input is ignored") {
  const Inpainter p(tiny_model());
  const ImageTensor img = testing::smooth_tir(32, 32, 3);
  const Mask m = testing::stroke_mask(32, 32, 0.2, 0.3, 3);
  ImageTensor scribbled = img;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k] == 0) scribbled[k] = 1.0 - scribbled[k];
  }
  CHECK(p.run(img, m).result == p.run(scribbled, m).result);
}

TEST_CASE("odd sizes are padded and cropped back") {
  const Inpainter p(tiny_model());
  const ImageTensor img = testing::smooth_tir(30, 35, 4);
  const Mask m = testing::stroke_mask(30, 35, 0.1, 0.2, 4);
  const InpaintResult r = p.run(img, m);
  CHECK(r.padded);
  CHECK(r.result.height() == 30);
  CHECK(r.result.width() == 35);
  CHECK(r.edges.width() == 35);
  const ImageTensor padded = pad_to_multiple(img, 4);
  CHECK(padded.height() == 32);
  CHECK(padded.width() == 36);
  CHECK(padded.at(30, 0) == img.at(28, 0));  // reflection excludes the edge row
  CHECK(padded.at(0, 35) == img.at(0, 33));
}

TEST_CASE("inference is deterministic and stateless") {
  const auto model = tiny_model(5);
  const auto before = model->refinement.params().snapshot();
  const Inpainter p(model);
  const ImageTensor img = testing::smooth_tir(32, 32, 5);
  const Mask m = testing::stroke_mask(32, 32, 0.3, 0.4, 5);
  const InpaintResult a = p.run(img, m);
  const InpaintResult b = p.run(img, m);
  CHECK(a.result == b.result);
  CHECK(a.edges == b.edges);
  CHECK(model->refinement.params().snapshot() == before);
  CHECK(a.timings.edge_ms >= 0.0);
}

TEST_CASE("input validation") {
  const Inpainter p(tiny_model());
  CHECK_THROWS_AS(p.run(ImageTensor(8, 8, 0.5), Mask(8, 4, 1)), ValidationError);
  CHECK_THROWS_AS(p.run(ImageTensor(8, 8, 1.5), Mask(8, 8, 1)), ValidationError);
  CHECK_THROWS_AS(p.run(ImageTensor(8, 8, 0.5), Mask(8, 8, 2)), ValidationError);
}
