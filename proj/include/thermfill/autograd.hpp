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

// Reverse-mode automatic differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Ops build nodes eagerly; when any
// input requires a gradient (and grad mode is on for the calling thread) the
// node records its inputs and a closure that pushes its adjoint back. Calling
// backward() on a scalar Var runs the closures in reverse topological order
// and then releases the graph.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "thermfill/tensor.hpp"

namespace thermfill::nn {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  // Seeds d(self)/d(self) = 1 for a single-element Var and propagates.
  void backward();

  // Same value, cut from the graph.
  Var detach() const;

  // Scalar read for single-element Vars.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Var make_result(Tensor, std::vector<Var>,
                         std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

// Creates an op result; records the graph only when needed.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward);

// Thread-local switch; inference paths disable graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a * s + t, elementwise constants.
Var affine(const Var& a, double s, double t);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
// x * sigmoid(x)
Var swish(const Var& a);
Var abs(const Var& a);

// ---- reductions -------------------------------------------------------------

Var mean(const Var& a);
Var sum(const Var& a);
// mean(|a - b|)
Var mean_abs_diff(const Var& a, const Var& b);

// ---- spatial ----------------------------------------------------------------

struct ConvOptions {
  int stride = 1;
  int padding = 0;  // zero padding on every side
  int dilation = 1;
};

// weight: [out, in, k, k]; bias: [1, out, 1, 1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias,
           ConvOptions opt = {});

// weight: [in, out, k, k]; output side = (in - 1) * stride - 2 * pad + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     int stride, int padding);

Var reflect_pad(const Var& x, int pad);

// Per-(sample, channel) normalization without affine parameters.
Var instance_norm(const Var& x, double eps = 1e-5);

Var upsample_nearest(const Var& x, int factor);
Var resize_nearest(const Var& x, int height, int width);
Var max_pool2x2(const Var& x);

Var concat_channels(const std::vector<Var>& parts);
Var repeat_channels(const Var& x, int times);

// x[:, c] * scales[c] + shifts[c]
Var channel_affine(const Var& x, const std::vector<double>& scales,
                   const std::vector<double>& shifts);

// Per-sample F F^T / (C * H * W); result shape [n, 1, C, C].
Var gram_matrix(const Var& x);

// Splices `predicted` into the holes of `known`: known + predicted * (1 - m).
// Positions with mask == 1 copy `known` bit-exactly.
Var recompose(const Var& known, const Var& predicted, const Tensor& mask);

}  // namespace thermfill::nn
