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

// Parameterized building blocks shared by the generators and discriminators.

#pragma once

#include <string>
#include <vector>

#include "thermfill/autograd.hpp"
#include "thermfill/rng.hpp"

namespace thermfill::nn {

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;  // false for buffers such as power-iteration vectors
};

// Ordered registry of a network's tensors. Layers keep handles to the same
// nodes, so updating a value here updates the layer.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Var add(const std::string& name, Tensor init, bool trainable = true);

  std::vector<Parameter>& entries() { return entries_; }
  const std::vector<Parameter>& entries() const { return entries_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  std::size_t scalar_count() const;

  // Deep copy of every value, for before/after comparisons.
  std::vector<Tensor> snapshot() const;

 private:
  std::vector<Parameter> entries_;
};

Tensor he_normal(Shape shape, int fan_in, Rng& rng);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

enum class Init { he, small_normal };

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, int in, int out,
         int kernel, ConvOptions opt, Rng& rng, Init init = Init::he);

  Var forward(const Var& x) const { return conv2d(x, weight_, bias_, opt_); }

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int out_channels() const { return weight_.shape().n; }

 private:
  Var weight_;
  Var bias_;
  ConvOptions opt_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet& ps, const std::string& name, int in, int out,
                  int kernel, int stride, int padding, Rng& rng);

  Var forward(const Var& x) const {
    return conv_transpose2d(x, weight_, bias_, stride_, padding_);
  }

 private:
  Var weight_;
  Var bias_;
  int stride_ = 1;
  int padding_ = 0;
};

// Convolution whose weight is divided by its largest singular value,
// estimated by power iteration on persistent u/v buffers.
class SpectralConv2d {
 public:
  static constexpr int kInitIterations = 100;

  SpectralConv2d() = default;
  SpectralConv2d(ParameterSet& ps, const std::string& name, int in, int out,
                 int kernel, ConvOptions opt, Rng& rng);

  // With update_estimate set, one power-iteration step refreshes u and v
  // before normalizing (training); otherwise the stored vectors are used.
  Var forward(const Var& x, bool update_estimate) const;

  // W / sigma as a graph node.
  Var normalized_weight(bool update_estimate) const;

 private:
  Var weight_;
  Var bias_;
  Var u_;
  Var v_;
  ConvOptions opt_;
};

// Spatially varying modulation of an instance-normalized feature by scale
// and shift maps projected from an edge map.
class EagNorm {
 public:
  EagNorm() = default;
  // With enabled == false the layer is plain instance normalization and
  // registers no parameters.
  EagNorm(ParameterSet& ps, const std::string& name, int channels, int hidden,
          bool enabled, Rng& rng);

  Var forward(const Var& feature, const Var& edges) const;

  // gamma * normalized + beta with the edge map resized to the feature grid.
  Var modulate(const Var& normalized, const Var& edges) const;
  Var gamma(const Var& edges, int height, int width) const;
  Var beta(const Var& edges, int height, int width) const;

  bool enabled() const { return enabled_; }
  const Conv2d& shared() const { return shared_; }
  const Conv2d& gamma_head() const { return gamma_head_; }
  const Conv2d& beta_head() const { return beta_head_; }

  static constexpr double kEps = 1e-5;

 private:
  Var hidden(const Var& edges, int height, int width) const;

  bool enabled_ = false;
  int channels_ = 0;
  Conv2d shared_;
  Conv2d gamma_head_;
  Conv2d beta_head_;
};

// sigmoid(W_g * x) . swish(W_f * x); with gating disabled only the feature
// branch remains.
class GatedConv2d {
 public:
  GatedConv2d() = default;
  GatedConv2d(ParameterSet& ps, const std::string& name, int in, int out,
              int kernel, int stride, int dilation, bool gated, Rng& rng);

  Var forward(const Var& x) const;

  const Conv2d& gate() const { return gate_; }
  const Conv2d& feature() const { return feature_; }

 private:
  bool gated_ = true;
  Conv2d gate_;
  Conv2d feature_;
};

}  // namespace thermfill::nn
