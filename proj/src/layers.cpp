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

#include "thermfill/layers.hpp"

#include <Eigen/Core>
#include <cmath>

#include "thermfill/errors.hpp"

namespace thermfill::nn {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// ---- ParameterSet ---------------------------------------------------------------

Var ParameterSet::add(const std::string& name, Tensor init, bool trainable) {
  if (find(name) != nullptr) {
    throw ValidationError("duplicate parameter name " + name);
  }
  Var v(std::move(init), trainable);
  entries_.push_back({name, v, trainable});
  return v;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : entries_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : entries_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : entries_) p.var.zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.var.value().size();
  return n;
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.push_back(p.var.value());
  return out;
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  return normal_tensor(shape, std::sqrt(2.0 / fan_in), rng);
}

// ---- convolutions ----------------------------------------------------------------

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, int in, int out,
               int kernel, ConvOptions opt, Rng& rng, Init init)
    : opt_(opt) {
  const Shape ws{out, in, kernel, kernel};
  Tensor w = init == Init::he ? he_normal(ws, in * kernel * kernel, rng)
                              : normal_tensor(ws, 0.02, rng);
  weight_ = ps.add(name + ".weight", std::move(w));
  bias_ = ps.add(name + ".bias", Tensor({1, out, 1, 1}));
}

ConvTranspose2d::ConvTranspose2d(ParameterSet& ps, const std::string& name,
                                 int in, int out, int kernel, int stride,
                                 int padding, Rng& rng)
    : stride_(stride), padding_(padding) {
  // Each output pixel sees in * k * k / stride^2 inputs on average.
  const int fan_in = std::max(1, in * kernel * kernel / (stride * stride));
  weight_ = ps.add(name + ".weight",
                   he_normal({in, out, kernel, kernel}, fan_in, rng));
  bias_ = ps.add(name + ".bias", Tensor({1, out, 1, 1}));
}

namespace {

void normalize(Eigen::Ref<Eigen::VectorXd> v) {
  const double n = v.norm();
  v /= std::max(n, 1e-12);
}

}  // namespace

SpectralConv2d::SpectralConv2d(ParameterSet& ps, const std::string& name,
                               int in, int out, int kernel, ConvOptions opt,
                               Rng& rng)
    : opt_(opt) {
  weight_ = ps.add(name + ".weight",
                   normal_tensor({out, in, kernel, kernel}, 0.02, rng));
  bias_ = ps.add(name + ".bias", Tensor({1, out, 1, 1}));
  const int cols = in * kernel * kernel;
  Tensor u = normal_tensor({1, 1, 1, out}, 1.0, rng);
  Tensor v({1, 1, 1, cols});
  ConstRowMap w(weight_.value().data(), out, cols);
  VecMap um(u.data(), out);
  VecMap vm(v.data(), cols);
  normalize(um);
  for (int i = 0; i < kInitIterations; ++i) {
    vm = w.transpose() * um;
    normalize(vm);
    um = w * vm;
    normalize(um);
  }
  u_ = ps.add(name + ".sn_u", std::move(u), false);
  v_ = ps.add(name + ".sn_v", std::move(v), false);
}

Var SpectralConv2d::normalized_weight(bool update_estimate) const {
  const Shape ws = weight_.shape();
  const int rows = ws.n;
  const int cols = ws.c * ws.h * ws.w;
  ConstRowMap w(weight_.value().data(), rows, cols);
  Var u_buf = u_;
  Var v_buf = v_;
  VecMap u(u_buf.mutable_value().data(), rows);
  VecMap v(v_buf.mutable_value().data(), cols);
  if (update_estimate) {
    v = w.transpose() * u;
    normalize(v);
    u = w * v;
    normalize(u);
  }
  const double sigma = u.dot(w * v);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw NumericalError("spectral norm estimate is not positive");
  }
  Tensor out(ws);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = weight_.value()[i] / sigma;
  }
  const Eigen::VectorXd uc = u;
  const Eigen::VectorXd vc = v;
  auto wn = weight_.node();
  return make_result(
      std::move(out), {weight_}, [wn, uc, vc, sigma, rows, cols](Node& self) {
        ConstRowMap g(self.grad.data(), rows, cols);
        ConstRowMap wv(wn->value.data(), rows, cols);
        const double inner = (g.array() * wv.array()).sum();
        Eigen::Map<RowMat> dw(wn->grad_buffer().data(), rows, cols);
        dw += g / sigma - (inner / (sigma * sigma)) * (uc * vc.transpose());
      });
}

Var SpectralConv2d::forward(const Var& x, bool update_estimate) const {
  return conv2d(x, normalized_weight(update_estimate), bias_, opt_);
}

// ---- EAG normalization --------------------------------------------------------

EagNorm::EagNorm(ParameterSet& ps, const std::string& name, int channels,
                 int hidden, bool enabled, Rng& rng)
    : enabled_(enabled), channels_(channels) {
  if (!enabled_) return;
  const ConvOptions same{1, 1, 1};
  shared_ = Conv2d(ps, name + ".shared", 1, hidden, 3, same, rng);
  gamma_head_ = Conv2d(ps, name + ".gamma", hidden, channels, 3, same, rng,
                       Init::small_normal);
  beta_head_ = Conv2d(ps, name + ".beta", hidden, channels, 3, same, rng,
                      Init::small_normal);
  // Start as identity modulation: gamma = 1, beta = 0.
  Var gb = gamma_head_.bias();
  gb.mutable_value().fill(1.0);
}

Var EagNorm::hidden(const Var& edges, int height, int width) const {
  if (edges.shape().c != 1) {
    throw ValidationError("EAG normalization expects a single-channel edge map");
  }
  return relu(shared_.forward(resize_nearest(edges, height, width)));
}

Var EagNorm::gamma(const Var& edges, int height, int width) const {
  return gamma_head_.forward(hidden(edges, height, width));
}

Var EagNorm::beta(const Var& edges, int height, int width) const {
  return beta_head_.forward(hidden(edges, height, width));
}

Var EagNorm::modulate(const Var& normalized, const Var& edges) const {
  const Shape s = normalized.shape();
  if (gamma_head_.out_channels() != s.c || beta_head_.out_channels() != s.c) {
    throw ValidationError("EAG heads produce " +
                          std::to_string(gamma_head_.out_channels()) +
                          " channels for a " + std::to_string(s.c) +
                          "-channel feature");
  }
  if (edges.shape().n != s.n) {
    throw ValidationError("EAG edge batch does not match feature batch");
  }
  Var h = hidden(edges, s.h, s.w);
  return add(mul(normalized, gamma_head_.forward(h)), beta_head_.forward(h));
}

Var EagNorm::forward(const Var& feature, const Var& edges) const {
  Var normalized = instance_norm(feature, kEps);
  if (!enabled_) return normalized;
  if (feature.shape().c != channels_) {
    throw ValidationError("EAG normalization built for " +
                          std::to_string(channels_) + " channels, got " +
                          std::to_string(feature.shape().c));
  }
  return modulate(normalized, edges);
}

// ---- gated convolution ------------------------------------------------------------

GatedConv2d::GatedConv2d(ParameterSet& ps, const std::string& name, int in,
                         int out, int kernel, int stride, int dilation,
                         bool gated, Rng& rng)
    : gated_(gated) {
  const ConvOptions opt{stride, dilation * (kernel - 1) / 2, dilation};
  feature_ = Conv2d(ps, name + ".feature", in, out, kernel, opt, rng);
  if (gated_) gate_ = Conv2d(ps, name + ".gate", in, out, kernel, opt, rng);
}

Var GatedConv2d::forward(const Var& x) const {
  Var f = swish(feature_.forward(x));
  if (!gated_) return f;
  return mul(sigmoid(gate_.forward(x)), f);
}

}  // namespace thermfill::nn
