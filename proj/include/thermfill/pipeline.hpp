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

#pragma once

#include <memory>

#include "thermfill/edge_ops.hpp"
#include "thermfill/networks.hpp"

namespace thermfill {

struct InpaintOptions {
  bool mask_input_edges = true;
  double canny_low = kCannyLow;
  double canny_high = kCannyHigh;
  double edge_threshold = kEdgeThreshold;
};

struct StageTimings {
  double edge_ms = 0.0;
  double completion_ms = 0.0;
  double refinement_ms = 0.0;
};

struct InpaintResult {
  ImageTensor result;       // recomposed refinement output
  ImageTensor refined_raw;  // refinement output before recomposition
  ImageTensor coarse;       // recomposed completion output
  EdgeMap edges;            // recomposed binary edge map
  StageTimings timings;
  bool padded = false;
};

// Runs edge -> completion -> refinement with recomposition after each
// generator. Inputs whose sides are not multiples of 4 are reflect-padded at
// the bottom and right and cropped back. Stateless and safe to share across
// threads.
class Inpainter {
 public:
  explicit Inpainter(std::shared_ptr<const nn::ModelBundle> model,
                     InpaintOptions options = {});

  // `image` may contain content in the holes; it is masked first.
  InpaintResult run(const ImageTensor& image, const Mask& mask) const;

  const nn::ModelBundle& model() const { return *model_; }

 private:
  std::shared_ptr<const nn::ModelBundle> model_;
  InpaintOptions options_;
};

// Reflect-pads bottom/right up to the next multiple of `multiple`.
ImageTensor pad_to_multiple(const ImageTensor& image, int multiple);
Mask pad_to_multiple(const Mask& mask, int multiple);

}  // namespace thermfill
