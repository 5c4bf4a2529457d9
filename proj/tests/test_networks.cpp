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

#include <Eigen/Dense>

#include "support.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/networks.hpp"

using namespace thermfill;
using namespace thermfill::nn;
using testing::random_tensor;

namespace {

Tensor binary_tensor(Shape s, Rng& rng, double p) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform() < p ? 1.0 : 0.0;
  return t;
}

Tensor uniform_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

// Input gradient plus a sample of parameters, which keeps each check cheap.
std::vector<Var> grad_leaves(const Var& input, const ParameterSet& ps,
                             std::size_t stride) {
  std::vector<Var> leaves{input};
  for (std::size_t i = 0; i < ps.entries().size(); i += stride) {
    if (ps.entries()[i].trainable) leaves.push_back(ps.entries()[i].var);
  }
  return leaves;
}

void expect_open_unit_range(const Tensor& t) {
  for (double v : t.values()) CHECK((v > 0.0 && v < 1.0));
}

}  // namespace

TEST_CASE("network config validation and round trip") {
  NetworkConfig c = NetworkConfig::tiny();
  CHECK(NetworkConfig::from_json(c.to_json()) == c);
  c.base_width = 0;
  CHECK_THROWS(c.validate());
  CHECK_THROWS_AS(NetworkConfig::from_json(nlohmann::json{{"depth", "x"}}), ConfigError);
}

TEST_CASE("edge generator shape, range and batch independence") {
  NetworkConfig cfg = NetworkConfig::tiny();
  cfg.input_size = 256;
  Rng rng(1);
  EdgeGenerator e(cfg, rng);
  Tensor img = uniform_tensor({1, 1, 256, 256}, rng);
  const Tensor mask = binary_tensor({1, 1, 256, 256}, rng, 0.8);
  const Tensor edges = binary_tensor({1, 1, 256, 256}, rng, 0.1);
  NoGradGuard ng;
  const Tensor out = e.forward(Var(img), Var(edges), Var(mask)).value();
  CHECK(out.shape() == Shape{1, 1, 256, 256});
  expect_open_unit_range(out);

  Rng r2(2);
  Tensor two = uniform_tensor({2, 1, 32, 32}, r2);
  std::copy(two.plane(0, 0), two.plane(0, 0) + 1024, two.plane(1, 0));
  Tensor m2({2, 1, 32, 32}, 1.0);
  Tensor e2({2, 1, 32, 32}, 0.0);
  const Tensor o2 = e.forward(Var(two), Var(e2), Var(m2)).value();
  for (int i = 0; i < 1024; ++i) CHECK(o2.plane(0, 0)[i] == o2.plane(1, 0)[i]);
}

TEST_CASE("edge generator rejects sides that are not multiples of 4") {
  Rng rng(3);
  EdgeGenerator e(NetworkConfig::tiny(), rng);
  CHECK_THROWS_AS(e.forward(Var(Tensor({1, 1, 30, 32})), Var(Tensor({1, 1, 30, 32})),
                            Var(Tensor({1, 1, 30, 32}))),
                  ValidationError);
}

TEST_CASE("edge generator finite differences on 16x16") {
  Rng rng(4);
  EdgeGenerator e(NetworkConfig::tiny(), rng);
  testing::jitter_biases(e.params(), rng);
  Var img(uniform_tensor({1, 1, 16, 16}, rng), true);
  const Var edges(binary_tensor({1, 1, 16, 16}, rng, 0.2));
  const Var mask(binary_tensor({1, 1, 16, 16}, rng, 0.7));
  const auto r = testing::check_gradients(
      [&] { return testing::random_projection(e.forward(img, edges, mask), 21); },
      grad_leaves(img, e.params(), 3), testing::kFdStep, 24);
  CAPTURE(r.worst_leaf);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("EAG resblock with zero branch convs is the identity") {
  NetworkConfig cfg = NetworkConfig::tiny();
  Rng rng(5);
  ParameterSet ps;
  EagResBlock block(ps, "b", 8, cfg, rng);
  for (const Conv2d* c : {&block.conv1(), &block.conv2()}) {
    Var(c->weight()).mutable_value().fill(0.0);
    Var(c->bias()).mutable_value().fill(0.0);
  }
  const Tensor x = random_tensor({1, 8, 16, 16}, rng);
  const Tensor y = block.forward(Var(x), Var(binary_tensor({1, 1, 16, 16}, rng, 0.2))).value();
  CHECK(y == x);
}

TEST_CASE("EAG resblock keeps shape") {
  NetworkConfig cfg = NetworkConfig::tiny();
  Rng rng(6);
  ParameterSet ps;
  EagResBlock block(ps, "b", 64, cfg, rng);
  NoGradGuard ng;
  CHECK(block.forward(Var(random_tensor({1, 64, 32, 32}, rng)), Var(Tensor({1, 1, 32, 32})))
            .shape() == Shape{1, 64, 32, 32});
}

TEST_CASE("completion output ignores edges exactly when EAG is off") {
  Rng rng(7);
  const Tensor img = uniform_tensor({1, 1, 32, 32}, rng);
  const Tensor mask = binary_tensor({1, 1, 32, 32}, rng, 0.7);
  const Tensor e1 = binary_tensor({1, 1, 32, 32}, rng, 0.1);
  const Tensor e2 = binary_tensor({1, 1, 32, 32}, rng, 0.3);
  NoGradGuard ng;
  for (bool enabled : {false, true}) {
    NetworkConfig cfg = NetworkConfig::tiny();
    cfg.eag_enabled = enabled;
    Rng r(8);
    CompletionNet g(cfg, r);
    const Tensor a = g.forward(Var(img), Var(e1), Var(mask)).value();
    const Tensor b = g.forward(Var(img), Var(e2), Var(mask)).value();
    CHECK((a == b) == !enabled);
    for (double v : a.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("completion end-to-end parameter gradient of the l1 loss") {
  Rng rng(9);
  CompletionNet g(NetworkConfig::tiny(), rng);
  testing::jitter_biases(g.params(), rng);
  Var img(uniform_tensor({1, 1, 32, 32}, rng), true);
  const Var gt(uniform_tensor({1, 1, 32, 32}, rng));
  const Var edges(binary_tensor({1, 1, 32, 32}, rng, 0.2));
  const Var mask(binary_tensor({1, 1, 32, 32}, rng, 0.7));
  const auto r = testing::check_gradients(
      [&] { return mean_abs_diff(g.forward(img, edges, mask), gt); },
      grad_leaves(img, g.params(), 2), testing::kFdStep, 24);
  CAPTURE(r.worst_leaf);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("refinement shape, range and gradient") {
  for (bool gated : {true, false}) {
    NetworkConfig cfg = NetworkConfig::tiny();
    cfg.gated_enabled = gated;
    Rng rng(10);
    RefinementNet r(cfg, rng);
    Var img(uniform_tensor({1, 1, 16, 16}, rng), true);
    const Var mask(binary_tensor({1, 1, 16, 16}, rng, 0.7));
    {
      NoGradGuard ng;
      const Tensor out = r.forward(img, mask).value();
      CHECK(out.shape() == Shape{1, 1, 16, 16});
      for (double v : out.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
    const auto res = testing::check_gradients(
        [&] { return testing::random_projection(r.forward(img, mask), 22); },
        grad_leaves(img, r.params(), 3), testing::kFdStep, 24);
    CAPTURE(res.worst_leaf);
    CHECK(res.max_relative_error < 1e-3);
  }
}

TEST_CASE("patch discriminator geometry") {
  NetworkConfig cfg;
  Rng rng(11);
  PatchDiscriminator d(cfg, rng);
  CHECK(d.receptive_field() == 70);
  CHECK(d.output_size(256) == 30);
  NoGradGuard ng;
  const Tensor s = d.forward(Var(uniform_tensor({1, 1, 256, 256}, rng)), false).value();
  CHECK(s.shape() == Shape{1, 1, 30, 30});
  CHECK_THROWS_AS(d.forward(Var(Tensor({1, 1, 64, 64})), false), ValidationError);
  CHECK_THROWS_AS(d.forward(Var(Tensor({1, 2, 128, 128})), false), ValidationError);
  CHECK(PatchDiscriminator(NetworkConfig::tiny(), rng).receptive_field() == 34);
}

TEST_CASE("every discriminator layer is spectrally normalized") {
  NetworkConfig cfg = NetworkConfig::tiny();
  Rng rng(12);
  PatchDiscriminator d(cfg, rng);
  for (const auto& layer : d.layers()) {
    const Tensor w = layer.normalized_weight(false).value();
    const Shape s = w.shape();
    const int cols = s.c * s.h * s.w;
    Eigen::MatrixXd m(s.n, cols);
    for (int r = 0; r < s.n; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = w[static_cast<std::size_t>(r) * cols + c];
    CHECK(Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0) <= 1.0 + 1e-2);
  }
}

TEST_CASE("model bundle seeds are reproducible") {
  const ModelBundle a(NetworkConfig::tiny(), 3);
  const ModelBundle b(NetworkConfig::tiny(), 3);
  const ModelBundle c(NetworkConfig::tiny(), 4);
  CHECK(a.completion.params().snapshot()[0] == b.completion.params().snapshot()[0]);
  CHECK_FALSE(a.completion.params().snapshot()[0] == c.completion.params().snapshot()[0]);
  CHECK(a.all_finite());
  CHECK(a.parameter_sets().size() == 5);
}
