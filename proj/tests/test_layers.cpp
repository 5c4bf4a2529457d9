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
#include <cmath>

#include "support.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/layers.hpp"

using namespace thermfill;
using namespace thermfill::nn;
using testing::random_tensor;

namespace {

void fill(const Var& v, double value) {
  Var(v).mutable_value().fill(value);
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("parameter names are unique") {
  ParameterSet ps;
  ps.add("a", Tensor({1, 1, 1, 1}));
  CHECK_THROWS_AS(ps.add("a", Tensor({1, 1, 1, 1})), ValidationError);
  CHECK(ps.find("a") != nullptr);
  CHECK(ps.find("b") == nullptr);
}

TEST_CASE("gated conv scalar example") {
  Rng rng(0);
  ParameterSet ps;
  GatedConv2d g(ps, "g", 1, 1, 1, 1, 1, true, rng);
  fill(g.gate().weight(), 0.5);
  fill(g.gate().bias(), 0.0);
  fill(g.feature().weight(), 1.0);
  fill(g.feature().bias(), 0.0);
  const double out = g.forward(Var(Tensor({1, 1, 1, 1}, 1.0))).value()[0];
  CHECK(out == doctest::Approx(sigmoid_ref(0.5) * sigmoid_ref(1.0)).epsilon(1e-12));
  CHECK(std::abs(out - 0.45506) < 1e-4);
}

TEST_CASE("gate bias saturates the gate") {
  Rng rng(1);
  ParameterSet ps;
  GatedConv2d g(ps, "g", 3, 4, 3, 1, 1, true, rng);
  const Var x(random_tensor({1, 3, 8, 8}, rng));
  fill(g.gate().weight(), 0.0);

  fill(g.gate().bias(), -100.0);
  const Tensor y = g.forward(x).value();
  for (double v : y.values()) CHECK(std::abs(v) < 1e-40);

  fill(g.gate().bias(), 100.0);
  const Tensor open = g.forward(x).value();
  const Tensor want = swish(g.feature().forward(x)).value();
  for (std::size_t i = 0; i < open.size(); ++i) CHECK(std::abs(open[i] - want[i]) < 1e-6);
}

TEST_CASE("gated conv keeps spatial size at stride 1 for any dilation") {
  Rng rng(2);
  ParameterSet ps;
  for (int d : {1, 2, 4, 8}) {
    GatedConv2d g(ps, "g" + std::to_string(d), 2, 3, 3, 1, d, true, rng);
    CHECK(g.forward(Var(Tensor({1, 2, 20, 20}))).shape() == Shape{1, 3, 20, 20});
  }
  GatedConv2d s(ps, "s", 2, 3, 3, 2, 1, true, rng);
  CHECK(s.forward(Var(Tensor({1, 2, 20, 20}))).shape() == Shape{1, 3, 10, 10});
}

TEST_CASE("gated conv gradient") {
  Rng rng(3);
  ParameterSet ps;
  GatedConv2d g(ps, "g", 2, 3, 3, 1, 2, true, rng);
  Var x(random_tensor({2, 2, 8, 8}, rng), true);
  std::vector<Var> leaves{x};
  for (auto& p : ps.entries()) leaves.push_back(p.var);
  const auto r = testing::check_gradients(
      [&] { return testing::random_projection(g.forward(x), 11); }, leaves);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("EAG with zero-weight heads reduces to a closed form") {
  Rng rng(4);
  ParameterSet ps;
  EagNorm n(ps, "n", 4, 8, true, rng);
  const double g0 = 1.7, b0 = -0.3;
  fill(n.gamma_head().weight(), 0.0);
  fill(n.gamma_head().bias(), g0);
  fill(n.beta_head().weight(), 0.0);
  fill(n.beta_head().bias(), b0);
  const Var feature(random_tensor({2, 4, 8, 8}, rng, 3.0));
  const Var edges(Tensor({2, 1, 8, 8}, 0.0));
  const Tensor out = n.forward(feature, edges).value();
  const Tensor in = instance_norm(feature, EagNorm::kEps).value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == doctest::Approx(in[i] * g0 + b0).epsilon(1e-12));
  }
}

TEST_CASE("identity modulation leaves the instance-normalized feature") {
  Rng rng(5);
  ParameterSet ps;
  EagNorm n(ps, "n", 3, 8, true, rng);
  fill(n.gamma_head().weight(), 0.0);
  fill(n.gamma_head().bias(), 1.0);
  fill(n.beta_head().weight(), 0.0);
  fill(n.beta_head().bias(), 0.0);
  Tensor edges({1, 1, 16, 16});
  for (std::size_t i = 0; i < edges.size(); i += 3) edges[i] = 1.0;
  const Tensor out = n.forward(Var(random_tensor({1, 3, 16, 16}, rng, 2.0)), Var(edges)).value();
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    const double* p = out.plane(0, c);
    for (int i = 0; i < 256; ++i) m += p[i];
    m /= 256;
    for (int i = 0; i < 256; ++i) v += (p[i] - m) * (p[i] - m);
    v /= 256;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }
}

TEST_CASE("EAG modulation gradient on a 2x4x8x8 instance") {
  Rng rng(6);
  ParameterSet ps;
  EagNorm n(ps, "n", 4, 6, true, rng);
  testing::jitter_biases(ps, rng);
  Var feature(random_tensor({2, 4, 8, 8}, rng), true);
  Tensor e({2, 1, 8, 8});
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  const Var edges(e);
  std::vector<Var> leaves{feature, n.gamma_head().weight(), n.gamma_head().bias(),
                          n.beta_head().weight(), n.beta_head().bias(),
                          n.shared().weight(), n.shared().bias()};
  const auto r = testing::check_gradients(
      [&] { return testing::random_projection(n.forward(feature, edges), 12); }, leaves);
  CAPTURE(r.worst_leaf);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("EAG rejects mismatched inputs") {
  Rng rng(7);
  ParameterSet ps;
  EagNorm n(ps, "n", 4, 6, true, rng);
  CHECK_THROWS_AS(n.forward(Var(Tensor({1, 3, 8, 8})), Var(Tensor({1, 1, 8, 8}))),
                  ValidationError);
  CHECK_THROWS_AS(n.forward(Var(Tensor({2, 4, 8, 8})), Var(Tensor({1, 1, 8, 8}))),
                  ValidationError);
}

TEST_CASE("disabled EAG is plain instance norm without parameters") {
  Rng rng(8);
  ParameterSet ps;
  EagNorm n(ps, "n", 4, 6, false, rng);
  CHECK(ps.entries().empty());
  const Var x(random_tensor({1, 4, 8, 8}, rng));
  CHECK(n.forward(x, Var(Tensor({1, 1, 8, 8}, 1.0))).value().values()[5] ==
        instance_norm(x, EagNorm::kEps).value()[5]);
}

TEST_CASE("spectral normalization bounds the largest singular value") {
  Rng rng(9);
  ParameterSet ps;
  SpectralConv2d conv(ps, "sn", 16, 32, 4, {2, 1, 1}, rng);
  // Scale the raw weight far above unit norm.
  Var w = ps.find("sn.weight")->var;
  for (auto& v : w.mutable_value().values()) v *= 25.0;
  for (int i = 0; i < 30; ++i) conv.normalized_weight(true);
  const Tensor wn = conv.normalized_weight(false).value();
  const Shape s = wn.shape();
  Eigen::MatrixXd m(s.n, s.c * s.h * s.w);
  for (int r = 0; r < s.n; ++r)
    for (int c = 0; c < s.c * s.h * s.w; ++c) m(r, c) = wn[static_cast<std::size_t>(r) * m.cols() + c];
  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
  CHECK(sigma <= 1.0 + 1e-2);
  CHECK(sigma > 0.9);
}

TEST_CASE("spectral normalized conv gradient") {
  Rng rng(10);
  ParameterSet ps;
  SpectralConv2d conv(ps, "sn", 2, 3, 4, {2, 1, 1}, rng);
  Var x(random_tensor({1, 2, 8, 8}, rng), true);
  std::vector<Var> leaves{x, ps.find("sn.weight")->var, ps.find("sn.bias")->var};
  const auto r = testing::check_gradients(
      [&] { return testing::random_projection(conv.forward(x, false), 13); }, leaves);
  CHECK(r.max_relative_error < 1e-3);
}
