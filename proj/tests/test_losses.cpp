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

#include <cstdlib>

#include "support.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/losses.hpp"

using namespace thermfill;
using namespace thermfill::nn;

namespace {

Var scores(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Var(Tensor({1, 1, 1, n}, std::move(v)));
}

Tensor uniform(Shape s, Rng& rng) {
  Tensor t(s);
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

const FeatureExtractor& small_extractor() {
  static const FeatureExtractor e = FeatureExtractor::random({16, 3});
  return e;
}

}  // namespace

TEST_CASE("hinge generator loss") {
  CHECK(hinge_generator_loss(scores({0, 0, 0})).item() == 0.0);
  CHECK(hinge_generator_loss(scores({3, 3})).item() == -3.0);
  CHECK(hinge_generator_loss(scores({1, -2, 4, -3})).item() == 0.0);
}

TEST_CASE("hinge discriminator loss") {
  CHECK(hinge_discriminator_loss(scores({1, 1}), scores({-1, -1})).item() == 0.0);
  CHECK(hinge_discriminator_loss(scores({0, 0}), scores({0, 0})).item() == 2.0);
  CHECK(hinge_discriminator_loss(scores({5, 5}), scores({-5, -5})).item() == 0.0);
}

TEST_CASE("gram matrix") {
  CHECK(thermfill::gram_matrix(Var(Tensor({1, 1, 2, 2}, 1.0))).item() == 1.0);
  const Tensor zero = thermfill::gram_matrix(Var(Tensor({1, 3, 2, 2}, 0.0))).value();
  for (double v : zero.values()) CHECK(v == 0.0);
  Rng rng(1);
  const Tensor g = thermfill::gram_matrix(Var(testing::random_tensor({2, 4, 3, 3}, rng))).value();
  CHECK(g.shape() == Shape{2, 1, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(std::abs(g.at(n, 0, i, j) - g.at(n, 0, j, i)) < 1e-12);
}

TEST_CASE("reconstruction loss components") {
  Rng rng(2);
  const Tensor gt = uniform({1, 1, 16, 16}, rng);
  Tensor shifted = gt;
  for (auto& v : shifted.values()) v += 0.1;
  const FeatureExtractor* e = &small_extractor();

  const LossReport same = reconstruction_loss(Var(gt), Var(gt), e);
  CHECK(same.total == 0.0);
  for (const auto& [k, v] : same.components) CHECK(v == 0.0);

  const LossReport off = reconstruction_loss(Var(shifted), Var(gt), e);
  CHECK(off.components.at("l1") == doctest::Approx(0.1).epsilon(1e-12));
  const LossReport swapped = reconstruction_loss(Var(gt), Var(shifted), e);
  for (const auto& [k, v] : off.components) CHECK(swapped.components.at(k) == doctest::Approx(v).epsilon(1e-12));
  CHECK(off.total >= 0.0);

  const LossReport stage = stage_loss_completion(Var(shifted), Var(gt), e);
  CHECK(stage.total == off.total);
  CHECK_THROWS_AS(reconstruction_loss(Var(gt), Var(gt), nullptr), ConfigError);
}

TEST_CASE("refinement loss arithmetic") {
  Rng rng(3);
  const Tensor gt = uniform({1, 1, 16, 16}, rng);
  const FeatureExtractor* e = &small_extractor();
  LossWeights w;
  w.adversarial = 0.25;
  CHECK(stage_loss_refinement(Var(gt), Var(gt), scores({0, 0}), e, w).total == 0.0);
  const LossReport r = stage_loss_refinement(Var(gt), Var(gt), scores({2, 2, 2}), e, w);
  CHECK(r.total == doctest::Approx(-2.0 * 0.25));

  const LossReport mixed = stage_loss_refinement(Var(uniform({1, 1, 16, 16}, rng)), Var(gt),
                                                 scores({0.3, -1.2}), e, w);
  const std::map<std::string, double> weight = {
      {"l1", w.l1}, {"perceptual", w.perceptual}, {"style", w.style}, {"adversarial", w.adversarial}};
  double sum = 0.0;
  for (const auto& [k, v] : mixed.components) sum += weight.at(k) * v;
  CHECK(sum == doctest::Approx(mixed.total).epsilon(1e-9));
  CHECK(mixed.graph.item() == doctest::Approx(mixed.total).epsilon(1e-12));
}

TEST_CASE("edge loss with optional l1 term") {
  Rng rng(4);
  const Tensor pred = uniform({1, 1, 8, 8}, rng);
  const Tensor gt({1, 1, 8, 8}, 0.0);
  LossWeights w;
  const LossReport plain = stage_loss_edge(Var(pred), Var(gt), scores({1.5}), w);
  CHECK(plain.total == -1.5);
  w.edge_l1 = 2.0;
  const LossReport with = stage_loss_edge(Var(pred), Var(gt), scores({1.5}), w);
  double l1 = 0.0;
  for (double v : pred.values()) l1 += v;
  l1 /= 64.0;
  CHECK(with.total == doctest::Approx(-1.5 + 2.0 * l1));
}

TEST_CASE("loss gradients on 8x8 instances") {
  Rng rng(5);
  Var pred(uniform({2, 1, 8, 8}, rng), true);
  const Var gt(uniform({2, 1, 8, 8}, rng));
  Var fake(testing::random_tensor({2, 1, 3, 3}, rng), true);
  Var real(testing::random_tensor({2, 1, 3, 3}, rng), true);
  Var feat(testing::random_tensor({2, 3, 8, 8}, rng), true);
  const FeatureExtractor* e = &small_extractor();
  const std::vector<std::pair<const char*, std::function<Var()>>> cases = {
      {"hinge g", [&] { return hinge_generator_loss(fake); }},
      {"hinge d", [&] { return hinge_discriminator_loss(real, fake); }},
      {"gram", [&] { return testing::random_projection(thermfill::gram_matrix(feat), 5); }},
      {"reconstruction", [&] { return reconstruction_loss(pred, gt, e).graph; }},
      {"completion", [&] { return stage_loss_completion(pred, gt, e).graph; }},
      {"refinement", [&] { return stage_loss_refinement(pred, gt, fake, e).graph; }},
      {"edge", [&] { return stage_loss_edge(pred, gt, fake, {1, 1, 1, 1, 1}).graph; }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    CHECK(testing::check_gradients(fn, {pred, fake, real, feat}).max_relative_error < 1e-3);
  }
}

TEST_CASE("feature extractor") {
  const FeatureExtractor& e = small_extractor();
  CHECK_FALSE(e.pretrained());
  CHECK(e.channels_at(2) == 4);
  Rng rng(6);
  const Var x(uniform({1, 1, 8, 8}, rng));
  const auto f = e.features(x, FeatureExtractor::kPerceptualTaps);
  CHECK(f.size() == 5);
  CHECK(f[0].shape() == Shape{1, 4, 8, 8});
  // Deterministic given the seed.
  const FeatureExtractor again = FeatureExtractor::random({16, 3});
  CHECK(again.snapshot() == e.snapshot());
}

TEST_CASE("extractor loads from a weights directory") {
  testing::TempDir dir;
  const FeatureExtractor src = FeatureExtractor::random({16, 9});
  Checkpoint c;
  c.header["width_divisor"] = 16;
  const auto snap = src.snapshot();  // weight, bias per conv in order
  // torchvision VGG-19 conv indices.
  const int convs[] = {0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34};
  REQUIRE(snap.size() == 2 * std::size(convs));
  std::size_t k = 0;
  for (int i : convs) {
    c.add("features." + std::to_string(i) + ".weight", snap[k++]);
    c.add("features." + std::to_string(i) + ".bias", snap[k++]);
  }
  write_checkpoint(dir / kVggWeightsFile, c, Precision::f64);
  setenv(kWeightsDirEnv, dir.path().c_str(), 1);
  const auto loaded = FeatureExtractor::from_environment();
  unsetenv(kWeightsDirEnv);
  REQUIRE(loaded.has_value());
  CHECK(loaded->pretrained());
  CHECK(loaded->snapshot() == snap);
  CHECK(FeatureExtractor::from_environment() == std::nullopt);
}
