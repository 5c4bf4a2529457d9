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

#include "thermfill/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "thermfill/errors.hpp"

namespace thermfill::nn {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// ---- Tensor -----------------------------------------------------------------

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.numel()) {
    throw ValidationError("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

// ---- graph ------------------------------------------------------------------

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var Var::detach() const { return Var(node_->value); }

double Var::item() const {
  if (node_->value.size() != 1) {
    throw ValidationError("item() on non-scalar " +
                          to_string(node_->value.shape()));
  }
  return node_->value[0];
}

void Var::backward() {
  if (node_->value.size() != 1) {
    throw ValidationError("backward() requires a scalar, got " +
                          to_string(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !child->inputs.empty() &&
          visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    n->backward = nullptr;
    n->inputs.clear();
    if (n != node_.get()) n->grad = Tensor();
  }
}

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) {
      return v.defined() && v.requires_grad();
    });
    if (needs) {
      node->requires_grad = true;
      for (auto& v : inputs) {
        if (v.defined() && v.requires_grad()) node->inputs.push_back(v.node());
      }
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- elementwise ------------------------------------------------------------

namespace {

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  auto an = a.node();
  return make_result(std::move(out), {a}, [an, deriv](Node& self) {
    Tensor& g = an->grad_buffer();
    const Tensor& x = an->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(x[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] + b.value()[i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out), {a, b}, [an, bn](Node& self) {
    for (auto* in : {an.get(), bn.get()}) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] - b.value()[i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      Tensor& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      Tensor& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * b.value()[i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      Tensor& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * bn->value[i];
      }
    }
    if (bn->requires_grad) {
      Tensor& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * an->value[i];
      }
    }
  });
}

Var affine(const Var& a, double s, double t) {
  return unary(
      a, [s, t](double x) { return x * s + t; },
      [s](double, double) { return s; });
}

Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
Var add_scalar(const Var& a, double s) { return affine(a, 1.0, s); }

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var swish(const Var& a) {
  return unary(
      a, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        double s = stable_sigmoid(x);
        return s + x * s * (1.0 - s);
      });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

// ---- reductions -------------------------------------------------------------

Var sum(const Var& a) {
  const Tensor& x = a.value();
  double total = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  auto an = a.node();
  return make_result(Tensor({1, 1, 1, 1}, total), {a}, [an](Node& self) {
    Tensor& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a, b, "mean_abs_diff");
  const std::size_t n = a.value().size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += std::fabs(a.value()[i] - b.value()[i]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  auto an = a.node();
  auto bn = b.node();
  return make_result(
      Tensor({1, 1, 1, 1}, total * inv), {a, b}, [an, bn, inv](Node& self) {
        const double g0 = self.grad[0] * inv;
        for (std::size_t i = 0; i < an->value.size(); ++i) {
          double d = an->value[i] - bn->value[i];
          double s = d > 0 ? g0 : (d < 0 ? -g0 : 0.0);
          if (an->requires_grad) an->grad_buffer()[i] += s;
          if (bn->requires_grad) bn->grad_buffer()[i] -= s;
        }
      });
}

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvGeom {
  int c, h, w;    // image side
  int k, stride, pad, dil;
  int ho, wo;     // column side
  int rows() const { return c * k * k; }
  int cols() const { return ho * wo; }
};

// Unfolds one (c, h, w) image into a (c*k*k) x (ho*wo) matrix.
void im2col(const double* x, const ConvGeom& g, double* out) {
  for (int ch = 0; ch < g.c; ++ch) {
    const double* plane = x + static_cast<std::size_t>(ch) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = out + (static_cast<std::size_t>(ch * g.k + ki) * g.k +
                             kj) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dil;
          double* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dil;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into the image.
void col2im(const double* cols, const ConvGeom& g, double* x) {
  for (int ch = 0; ch < g.c; ++ch) {
    double* plane = x + static_cast<std::size_t>(ch) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row =
            cols +
            (static_cast<std::size_t>(ch * g.k + ki) * g.k + kj) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki * g.dil;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.wo;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj * g.dil;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.value().size() != static_cast<std::size_t>(channels)) {
    throw ValidationError(std::string(op) + ": bias has " +
                          std::to_string(bias.value().size()) +
                          " entries, expected " + std::to_string(channels));
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opt) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ValidationError("conv2d: non-square kernel");
  if (ws.c != xs.c) {
    throw ValidationError("conv2d: kernel expects " + std::to_string(ws.c) +
                          " input channels, feature has " +
                          std::to_string(xs.c));
  }
  check_bias(bias, ws.n, "conv2d");
  ConvGeom g{xs.c, xs.h, xs.w, ws.h, opt.stride, opt.padding, opt.dilation,
             0, 0};
  const int span = g.dil * (g.k - 1) + 1;
  g.ho = (g.h + 2 * g.pad - span) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - span) / g.stride + 1;
  if (g.h + 2 * g.pad < span || g.w + 2 * g.pad < span) {
    throw ValidationError("conv2d: input " + to_string(xs) +
                          " smaller than kernel span " + std::to_string(span));
  }
  const int cout = ws.n;
  Tensor out({xs.n, cout, g.ho, g.wo});
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstRowMap wm(weight.value().data(), cout, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    im2col(x.value().plane(n, 0), g, cols.data());
    ConstRowMap cm(cols.data(), g.rows(), g.cols());
    RowMap om(out.plane(n, 0), cout, g.cols());
    om.noalias() = wm * cm;
    if (bias.defined()) {
      for (int o = 0; o < cout; ++o) om.row(o).array() += bias.value()[o];
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result(
      std::move(out), {x, weight, bias}, [xn, wn, bn, g, cout](Node& self) {
        std::vector<double> cols(static_cast<std::size_t>(g.rows()) *
                                 g.cols());
        ConstRowMap wm(wn->value.data(), cout, g.rows());
        const int batch = self.value.shape().n;
        for (int n = 0; n < batch; ++n) {
          ConstRowMap dout(self.grad.plane(n, 0), cout, g.cols());
          if (wn->requires_grad) {
            im2col(xn->value.plane(n, 0), g, cols.data());
            ConstRowMap cm(cols.data(), g.rows(), g.cols());
            RowMap dw(wn->grad_buffer().data(), cout, g.rows());
            dw.noalias() += dout * cm.transpose();
          }
          if (bn && bn->requires_grad) {
            Tensor& db = bn->grad_buffer();
            for (int o = 0; o < cout; ++o) db[o] += dout.row(o).sum();
          }
          if (xn->requires_grad) {
            RowMap dcols(cols.data(), g.rows(), g.cols());
            dcols.noalias() = wm.transpose() * dout;
            col2im(cols.data(), g, xn->grad_buffer().plane(n, 0));
          }
        }
      });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     int stride, int padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();  // [in, out, k, k]
  if (ws.h != ws.w) throw ValidationError("conv_transpose2d: non-square kernel");
  if (ws.n != xs.c) {
    throw ValidationError("conv_transpose2d: kernel expects " +
                          std::to_string(ws.n) + " input channels, feature has " +
                          std::to_string(xs.c));
  }
  const int cout = ws.c;
  check_bias(bias, cout, "conv_transpose2d");
  const int ho = (xs.h - 1) * stride - 2 * padding + ws.h;
  const int wo = (xs.w - 1) * stride - 2 * padding + ws.w;
  if (ho <= 0 || wo <= 0) throw ValidationError("conv_transpose2d: empty output");
  // Geometry of the forward conv that maps the output back onto the input.
  ConvGeom g{cout, ho, wo, ws.h, stride, padding, 1, xs.h, xs.w};
  Tensor out({xs.n, cout, ho, wo});
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstRowMap wm(weight.value().data(), xs.c, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    ConstRowMap xm(x.value().plane(n, 0), xs.c, g.cols());
    RowMap cm(cols.data(), g.rows(), g.cols());
    cm.noalias() = wm.transpose() * xm;
    col2im(cols.data(), g, out.plane(n, 0));
    if (bias.defined()) {
      for (int o = 0; o < cout; ++o) {
        double* p = out.plane(n, o);
        for (std::size_t i = 0; i < out.shape().plane(); ++i) {
          p[i] += bias.value()[o];
        }
      }
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  const int cin = xs.c;
  return make_result(
      std::move(out), {x, weight, bias}, [xn, wn, bn, g, cin](Node& self) {
        std::vector<double> cols(static_cast<std::size_t>(g.rows()) *
                                 g.cols());
        ConstRowMap wm(wn->value.data(), cin, g.rows());
        const int batch = self.value.shape().n;
        for (int n = 0; n < batch; ++n) {
          im2col(self.grad.plane(n, 0), g, cols.data());
          ConstRowMap dcols(cols.data(), g.rows(), g.cols());
          if (xn->requires_grad) {
            RowMap dx(xn->grad_buffer().plane(n, 0), cin, g.cols());
            dx.noalias() += wm * dcols;
          }
          if (wn->requires_grad) {
            ConstRowMap xm(xn->value.plane(n, 0), cin, g.cols());
            RowMap dw(wn->grad_buffer().data(), cin, g.rows());
            dw.noalias() += xm * dcols.transpose();
          }
          if (bn && bn->requires_grad) {
            Tensor& db = bn->grad_buffer();
            for (int o = 0; o < g.c; ++o) {
              const double* p = self.grad.plane(n, o);
              double s = 0.0;
              for (int i = 0; i < g.h * g.w; ++i) s += p[i];
              db[o] += s;
            }
          }
        }
      });
}

// ---- spatial ----------------------------------------------------------------

namespace {

// Builds an index map from every output element to its source element and
// applies it; the adjoint scatters through the same map.
Var gather(const Var& x, Shape out_shape, std::vector<std::size_t> src) {
  Tensor out(out_shape);
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = x.value()[src[i]];
  auto xn = x.node();
  auto map = std::make_shared<std::vector<std::size_t>>(std::move(src));
  return make_result(std::move(out), {x}, [xn, map](Node& self) {
    Tensor& g = xn->grad_buffer();
    const auto& m = *map;
    for (std::size_t i = 0; i < m.size(); ++i) g[m[i]] += self.grad[i];
  });
}

int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Var reflect_pad(const Var& x, int pad) {
  const Shape s = x.shape();
  if (pad == 0) return x;
  if (pad >= s.h || pad >= s.w) {
    throw ValidationError("reflect_pad: pad " + std::to_string(pad) +
                          " too large for " + to_string(s));
  }
  Shape os{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
  std::vector<std::size_t> src(os.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int y = 0; y < os.h; ++y) {
        const int sy = reflect_index(y - pad, s.h);
        for (int xo = 0; xo < os.w; ++xo) {
          const int sx = reflect_index(xo - pad, s.w);
          src[i++] = base + static_cast<std::size_t>(sy) * s.w + sx;
        }
      }
    }
  }
  return gather(x, os, std::move(src));
}

Var resize_nearest(const Var& x, int height, int width) {
  const Shape s = x.shape();
  if (height == s.h && width == s.w) return x;
  Shape os{s.n, s.c, height, width};
  std::vector<std::size_t> src(os.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>(static_cast<long>(y) * s.h / height);
        for (int xo = 0; xo < width; ++xo) {
          const int sx = static_cast<int>(static_cast<long>(xo) * s.w / width);
          src[i++] = base + static_cast<std::size_t>(sy) * s.w + sx;
        }
      }
    }
  }
  return gather(x, os, std::move(src));
}

Var upsample_nearest(const Var& x, int factor) {
  return resize_nearest(x, x.shape().h * factor, x.shape().w * factor);
}

Var max_pool2x2(const Var& x) {
  const Shape s = x.shape();
  Shape os{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<std::size_t> src(os.numel());
  std::size_t i = 0;
  const Tensor& v = x.value();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int y = 0; y < os.h; ++y) {
        for (int xo = 0; xo < os.w; ++xo) {
          std::size_t best = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xo;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              std::size_t j =
                  base + static_cast<std::size_t>(2 * y + dy) * s.w + 2 * xo + dx;
              if (v[j] > v[best]) best = j;
            }
          }
          src[i++] = best;
        }
      }
    }
  }
  return gather(x, os, std::move(src));
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no inputs");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != os.n || s.h != os.h || s.w != os.w) {
      throw ValidationError("concat_channels: incompatible " + to_string(s));
    }
    os.c += s.c;
  }
  Tensor out(os);
  const std::size_t plane = os.plane();
  int offset = 0;
  for (const auto& p : parts) {
    for (int n = 0; n < os.n; ++n) {
      std::copy_n(p.value().plane(n, 0), plane * p.shape().c,
                  out.plane(n, offset));
    }
    offset += p.shape().c;
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(out), parts, [nodes, plane](Node& self) {
    int offset = 0;
    const int batch = self.value.shape().n;
    for (const auto& in : nodes) {
      const int c = in->value.shape().c;
      if (in->requires_grad) {
        Tensor& g = in->grad_buffer();
        for (int n = 0; n < batch; ++n) {
          const double* src = self.grad.plane(n, offset);
          double* dst = g.plane(n, 0);
          for (std::size_t i = 0; i < plane * c; ++i) dst[i] += src[i];
        }
      }
      offset += c;
    }
  });
}

Var repeat_channels(const Var& x, int times) {
  std::vector<Var> parts(static_cast<std::size_t>(times), x);
  return concat_channels(parts);
}

Var channel_affine(const Var& x, const std::vector<double>& scales,
                   const std::vector<double>& shifts) {
  const Shape s = x.shape();
  if (scales.size() != static_cast<std::size_t>(s.c) ||
      shifts.size() != static_cast<std::size_t>(s.c)) {
    throw ValidationError("channel_affine: coefficient count mismatch");
  }
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        dst[i] = src[i] * scales[c] + shifts[c];
      }
    }
  }
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn, scales](Node& self) {
    const Shape s = self.value.shape();
    Tensor& g = xn->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* src = self.grad.plane(n, c);
        double* dst = g.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i] * scales[c];
      }
    }
  });
}

Var instance_norm(const Var& x, double eps) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out(s);
  std::vector<double> inv_std(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      double mu = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mu += src[i];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = src[i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(plane);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(n) * s.c + c] = inv;
      double* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * inv;
    }
  }
  auto xn = x.node();
  return make_result(
      std::move(out), {x}, [xn, inv_std = std::move(inv_std)](Node& self) {
        const Shape s = self.value.shape();
        const std::size_t plane = s.plane();
        const double inv_n = 1.0 / static_cast<double>(plane);
        Tensor& g = xn->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            const double* dy = self.grad.plane(n, c);
            const double* y = self.value.plane(n, c);
            double mean_dy = 0.0;
            double mean_dy_y = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
              mean_dy += dy[i];
              mean_dy_y += dy[i] * y[i];
            }
            mean_dy *= inv_n;
            mean_dy_y *= inv_n;
            const double inv = inv_std[static_cast<std::size_t>(n) * s.c + c];
            double* dx = g.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              dx[i] += inv * (dy[i] - mean_dy - y[i] * mean_dy_y);
            }
          }
        }
      });
}

Var gram_matrix(const Var& x) {
  const Shape s = x.shape();
  const int c = s.c;
  const int hw = static_cast<int>(s.plane());
  const double norm = 1.0 / (static_cast<double>(c) * hw);
  Tensor out({s.n, 1, c, c});
  for (int n = 0; n < s.n; ++n) {
    ConstRowMap f(x.value().plane(n, 0), c, hw);
    RowMap gm(out.plane(n, 0), c, c);
    gm.noalias() = f * f.transpose();
    gm *= norm;
  }
  auto xn = x.node();
  return make_result(std::move(out), {x}, [xn, c, hw, norm](Node& self) {
    const int batch = self.value.shape().n;
    for (int n = 0; n < batch; ++n) {
      ConstRowMap dg(self.grad.plane(n, 0), c, c);
      ConstRowMap f(xn->value.plane(n, 0), c, hw);
      RowMap df(xn->grad_buffer().plane(n, 0), c, hw);
      df.noalias() += norm * (dg + dg.transpose()) * f;
    }
  });
}

Var recompose(const Var& known, const Var& predicted, const Tensor& mask) {
  require_same_shape(known, predicted, "recompose");
  if (mask.shape() != known.shape()) {
    throw ValidationError("recompose: mask shape " + to_string(mask.shape()) +
                          " vs " + to_string(known.shape()));
  }
  Tensor out(known.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mask[i];
    out[i] = m == 1.0 ? known.value()[i]
                      : known.value()[i] + predicted.value()[i] * (1.0 - m);
  }
  auto kn = known.node();
  auto pn = predicted.node();
  auto hole = std::make_shared<Tensor>(mask);
  return make_result(std::move(out), {known, predicted},
                     [kn, pn, hole](Node& self) {
                       const Tensor& m = *hole;
                       if (kn->requires_grad) {
                         Tensor& g = kn->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i];
                         }
                       }
                       if (pn->requires_grad) {
                         Tensor& g = pn->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i] * (1.0 - m[i]);
                         }
                       }
                     });
}

}  // namespace thermfill::nn
