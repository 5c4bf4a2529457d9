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

#include "thermfill/pipeline.hpp"

#include <chrono>

#include "thermfill/data_pipeline.hpp"

namespace thermfill {

using nn::Var;

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <class G>
G pad_grid(const G& g, int multiple) {
  const int h = (g.height() + multiple - 1) / multiple * multiple;
  const int w = (g.width() + multiple - 1) / multiple * multiple;
  if (h == g.height() && w == g.width()) return g;
  G out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(y, x) = g.at(reflect(y, g.height()), reflect(x, g.width()));
    }
  }
  return out;
}

template <class G>
G crop_grid(const G& g, int h, int w) {
  G out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = g.at(y, x);
  }
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

ImageTensor pad_to_multiple(const ImageTensor& image, int multiple) {
  return pad_grid(image, multiple);
}

Mask pad_to_multiple(const Mask& mask, int multiple) {
  return pad_grid(mask, multiple);
}

Inpainter::Inpainter(std::shared_ptr<const nn::ModelBundle> model,
                     InpaintOptions options)
    : model_(std::move(model)), options_(options) {}

InpaintResult Inpainter::run(const ImageTensor& image, const Mask& mask) const {
  require_same_size(image, mask, "inpaint");
  validate_range(image);
  validate_binary(mask);
  nn::NoGradGuard no_grad;
  InpaintResult r;
  const int h = image.height();
  const int w = image.width();
  const ImageTensor known = apply_mask(image, mask);
  const Mask pm = pad_to_multiple(mask, 4);
  const ImageTensor pin = apply_mask(pad_to_multiple(known, 4), pm);
  r.padded = pm.height() != h || pm.width() != w;

  const Var vin(stack(std::span(&pin, 1)));
  const Var vmask(stack(std::span(&pm, 1)));

  auto t0 = std::chrono::steady_clock::now();
  const EdgeMap c_in = input_edges(pin, pm, options_.mask_input_edges,
                                   options_.canny_low, options_.canny_high);
  const Var vedge(stack(std::span(&c_in, 1)));
  const Var prob = model_->edge_generator.forward(vin, vedge, vmask);
  ProbabilityMap raw_edges(pm.height(), pm.width());
  for (std::size_t i = 0; i < raw_edges.size(); ++i) {
    raw_edges[i] = prob.value()[i];
  }
  const EdgeMap c_rec =
      recompose(c_in, binarize(raw_edges, options_.edge_threshold), pm);
  r.timings.edge_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const Var vrec(stack(std::span(&c_rec, 1)));
  const Var coarse = model_->completion.forward(vin, vrec, vmask);
  const ImageTensor coarse_rec =
      recompose(pin, image_from_tensor(coarse.value()), pm);
  r.timings.completion_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const Var vcoarse(stack(std::span(&coarse_rec, 1)));
  const Var refined = model_->refinement.forward(vcoarse, vmask);
  r.refined_raw = crop_grid(image_from_tensor(refined.value()), h, w);
  r.timings.refinement_ms = elapsed_ms(t0);

  r.result = recompose(known, r.refined_raw, mask);
  r.coarse = crop_grid(coarse_rec, h, w);
  r.edges = crop_grid(c_rec, h, w);
  return r;
}

}  // namespace thermfill
