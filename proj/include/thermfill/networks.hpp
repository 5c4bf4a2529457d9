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

// Edge generator, edge-guided completion network, gated refinement network
// and the patch discriminator.
//
// All generator inputs are [n, 1, h, w] tensors: images in [0, 1] (shifted
// to [-1, 1] internally), masks with 1 = valid, edge maps in [0, 1].

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thermfill/layers.hpp"

namespace thermfill::nn {

struct NetworkConfig {
  int base_width = 64;
  int depth = 6;        // EAG ResBlocks in the completion network
  int edge_depth = 8;   // residual blocks in the edge generator
  bool eag_enabled = true;
  bool gated_enabled = true;
  int input_size = 256;
  int eag_hidden = 128;
  int disc_width = 64;
  int disc_downsamples = 3;

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
  bool operator==(const NetworkConfig&) const = default;

  // Small widths for CPU smoke runs and tests.
  static NetworkConfig tiny();
};

// Throws ValidationError unless h and w are positive multiples of 4.
void require_divisible_by_4(int height, int width, const char* what);

// Conv (no norm) -> IN -> ReLU, optionally reflect-padded first.
struct ConvNormBlock {
  int reflect = 0;
  Conv2d conv;
  Var forward(const Var& x) const;
};

class EdgeGenerator {
 public:
  EdgeGenerator(const NetworkConfig& cfg, Rng& rng);

  // Edge probabilities in (0, 1).
  Var forward(const Var& image_in, const Var& edge_in, const Var& mask) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  struct ResBlock {
    Conv2d conv1;  // dilation 2
    Conv2d conv2;
  };

  ParameterSet params_;
  std::vector<ConvNormBlock> encoder_;
  std::vector<ResBlock> blocks_;
  ConvTranspose2d up1_;
  ConvTranspose2d up2_;
  Conv2d out_;
};

// x + conv(relu(EAG(conv(relu(EAG(x)))))) with 1-pixel reflect padding.
class EagResBlock {
 public:
  EagResBlock() = default;
  EagResBlock(ParameterSet& ps, const std::string& name, int channels,
              const NetworkConfig& cfg, Rng& rng);

  Var forward(const Var& x, const Var& edges) const;

  const EagNorm& norm1() const { return norm1_; }
  const EagNorm& norm2() const { return norm2_; }
  const Conv2d& conv1() const { return conv1_; }
  const Conv2d& conv2() const { return conv2_; }

 private:
  EagNorm norm1_;
  Conv2d conv1_;
  EagNorm norm2_;
  Conv2d conv2_;
};

class CompletionNet {
 public:
  CompletionNet(const NetworkConfig& cfg, Rng& rng);

  // Coarse image in [0, 1]. Edges reach the network only through the EAG
  // layers, so with EAG disabled the output ignores `edge_rec`.
  Var forward(const Var& image_in, const Var& edge_rec, const Var& mask) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<EagResBlock>& blocks() const { return blocks_; }

 private:
  ParameterSet params_;
  std::vector<ConvNormBlock> encoder_;
  std::vector<EagResBlock> blocks_;
  ConvTranspose2d up1_;
  ConvTranspose2d up2_;
  Conv2d out_;
};

class RefinementNet {
 public:
  RefinementNet(const NetworkConfig& cfg, Rng& rng);

  // Refined image in [0, 1] from the recomposed coarse image and the mask.
  Var forward(const Var& coarse_rec, const Var& mask) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  struct Stage {
    GatedConv2d conv;
    bool upsample_first = false;
  };

  ParameterSet params_;
  std::vector<Stage> stages_;
  Conv2d out_;
};

class PatchDiscriminator {
 public:
  PatchDiscriminator(const NetworkConfig& cfg, Rng& rng);

  // Unbounded per-patch scores. `training` advances the spectral-norm power
  // iteration by one step.
  Var forward(const Var& x, bool training) const;

  int receptive_field() const;
  int min_input_size() const { return receptive_field(); }
  // Score-grid side for a square input of side `size`.
  int output_size(int size) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<SpectralConv2d>& layers() const { return layers_; }

 private:
  ParameterSet params_;
  std::vector<SpectralConv2d> layers_;
  std::vector<int> strides_;
};

struct ModelBundle {
  explicit ModelBundle(const NetworkConfig& cfg, std::uint64_t seed = 0);

  NetworkConfig config;
  EdgeGenerator edge_generator;
  CompletionNet completion;
  RefinementNet refinement;
  PatchDiscriminator edge_discriminator;
  PatchDiscriminator image_discriminator;

  // Prefix -> set, in a fixed order.
  std::vector<std::pair<std::string, ParameterSet*>> parameter_sets();
  std::vector<std::pair<std::string, const ParameterSet*>> parameter_sets()
      const;
  bool all_finite() const;
};

}  // namespace thermfill::nn
