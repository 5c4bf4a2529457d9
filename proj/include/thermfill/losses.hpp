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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermfill/autograd.hpp"
#include "thermfill/checkpoint.hpp"

namespace thermfill {

// Environment variable naming the directory with pretrained weight files.
inline constexpr const char* kWeightsDirEnv = "TIRFILL_WEIGHTS_DIR";
inline constexpr const char* kVggWeightsFile = "vgg19.ckpt";

struct ExtractorOptions {
  // Channel counts are divided by this (min 1); 1 is the standard network.
  int width_divisor = 1;
  std::uint64_t seed = 0x76676731;
};

// The 37-layer VGG-19 feature stack (torchvision "features" indexing) with
// frozen weights. Grayscale input is replicated to three channels and
// normalized with the ImageNet statistics.
class FeatureExtractor {
 public:
  static constexpr std::array<int, 5> kPerceptualTaps{2, 7, 12, 21, 30};
  static constexpr std::array<int, 4> kStyleTaps{9, 18, 27, 32};
  static constexpr std::array<int, 5> kLpipsTaps{3, 8, 17, 26, 35};
  static constexpr int kLayerCount = 37;

  static FeatureExtractor random(const ExtractorOptions& options = {});
  // Tensors named "features.<i>.weight" / "features.<i>.bias".
  static FeatureExtractor from_checkpoint(const Checkpoint& ckpt);
  // Loads $TIRFILL_WEIGHTS_DIR/vgg19.ckpt when present.
  static std::optional<FeatureExtractor> from_environment();

  // Activations after each requested layer index, in the order given.
  // `image` is [n, 1, h, w] in [0, 1]. Pooling is skipped once a side drops
  // below 2 so small inputs stay valid.
  std::vector<nn::Var> features(const nn::Var& image,
                                std::span<const int> taps) const;

  // Output channels of layer `index`.
  int channels_at(int index) const;
  bool pretrained() const { return pretrained_; }
  int width_divisor() const { return width_divisor_; }
  std::vector<nn::Tensor> snapshot() const;

 private:
  enum class Kind { conv, relu, pool };
  struct Layer {
    Kind kind;
    int channels;  // output channels
    nn::Var weight;
    nn::Var bias;
  };
  FeatureExtractor() = default;
  static std::vector<Layer> topology(int divisor);

  std::vector<Layer> layers_;
  bool pretrained_ = false;
  int width_divisor_ = 1;
};

struct LossWeights {
  double l1 = 1.0;
  double perceptual = 1.0;
  double style = 1.0;
  double adversarial = 1.0;
  double edge_l1 = 0.0;
};

// `components` hold unweighted term values; `total` is their weighted sum.
struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;
  nn::Var graph;  // differentiable total
};

// -mean(fake_scores)
nn::Var hinge_generator_loss(const nn::Var& fake_scores);
// mean(relu(1 - real)) + mean(relu(1 + fake))
nn::Var hinge_discriminator_loss(const nn::Var& real_scores,
                                 const nn::Var& fake_scores);
// Per-sample F F^T / (C H W), shape [n, 1, C, C].
nn::Var gram_matrix(const nn::Var& feature);

// l1 + perceptual + style with mean reductions.
LossReport reconstruction_loss(const nn::Var& pred, const nn::Var& gt,
                               const FeatureExtractor* extractor,
                               const LossWeights& weights = {});
LossReport stage_loss_completion(const nn::Var& pred, const nn::Var& gt,
                                 const FeatureExtractor* extractor,
                                 const LossWeights& weights = {});
LossReport stage_loss_refinement(const nn::Var& pred, const nn::Var& gt,
                                 const nn::Var& fake_scores,
                                 const FeatureExtractor* extractor,
                                 const LossWeights& weights = {});
// Adversarial term plus the optional edge_l1 term against canny targets.
LossReport stage_loss_edge(const nn::Var& pred_edges, const nn::Var& gt_edges,
                           const nn::Var& fake_scores,
                           const LossWeights& weights = {});

}  // namespace thermfill
