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

// Sequential three-stage training: edge generator, then completion network
// with the edge generator frozen, then refinement with both frozen.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermfill/checkpoint.hpp"
#include "thermfill/data_pipeline.hpp"
#include "thermfill/edge_ops.hpp"
#include "thermfill/losses.hpp"
#include "thermfill/networks.hpp"

namespace thermfill {

enum class Stage { edge, completion, refinement };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

enum class MaskMode { buckets, files };

struct TrainConfig {
  nn::NetworkConfig network;
  double lr_edge = 1e-3;
  double lr_completion = 1e-4;
  double lr_refinement = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int steps_edge = 1000;
  int steps_completion = 1000;
  int steps_refinement = 1000;
  std::uint64_t seed = 0;
  // 64-bit checkpoints so resumed runs continue bit-exactly.
  bool deterministic = false;
  // Refinement stage also updates the completion network.
  bool joint_finetune = false;
  bool mask_input_edges = true;
  double canny_low = kCannyLow;
  double canny_high = kCannyHigh;
  LossWeights loss;
  int extractor_width_divisor = 1;
  int checkpoint_every = 0;  // 0: only at the end of a stage
  MaskMode mask_mode = MaskMode::buckets;
  bool resume = false;
  std::filesystem::path checkpoint_dir;  // empty: keep everything in memory
  std::filesystem::path manifest;

  void validate() const;
  int steps(Stage stage) const;
  double learning_rate(Stage stage) const;
  // Everything except filesystem paths, so archives are location-independent.
  nlohmann::json to_json() const;

  // Small widths and 64x64 crops for CPU smoke runs.
  static TrainConfig tiny();
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                      Stage stage);
inline constexpr const char* kLossLogFile = "loss_log.ndjson";

// ---- optimizer ----------------------------------------------------------------

// One bias-corrected Adam update of `param` in place; `t` is the 1-based
// step count.
void adam_step(nn::Tensor& param, const nn::Tensor& grad, nn::Tensor& m,
               nn::Tensor& v, long t, double lr, double beta1, double beta2,
               double eps = 1e-8);

class Adam {
 public:
  Adam(nn::ParameterSet& params, std::string prefix, double lr, double beta1,
       double beta2, double eps);

  // Applies accumulated gradients to trainable parameters, then clears them.
  // Throws TrainingError naming the first parameter with a non-finite
  // gradient; nothing is updated in that case.
  void step();

  long steps_taken() const { return t_; }
  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);

 private:
  nn::ParameterSet* params_;
  std::string prefix_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<nn::Tensor> m_;
  std::vector<nn::Tensor> v_;
};

// ---- data ----------------------------------------------------------------------

struct Batch {
  nn::Tensor images;  // [n, 1, s, s] ground truth in [0, 1]
  nn::Tensor masks;   // [n, 1, s, s], 1 = valid
};

class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch next(Rng& rng) = 0;
};

// Random crops of manifest images with generated (bucket mode) or listed
// (file mode) masks.
class ManifestSource : public BatchSource {
 public:
  ManifestSource(const DatasetManifest& manifest, int size, int batch_size,
                 MaskMode mode);
  Batch next(Rng& rng) override;

 private:
  std::vector<ImageTensor> images_;
  std::vector<std::filesystem::path> mask_files_;
  int size_;
  int batch_size_;
  MaskMode mode_;
};

// The same image and mask every step.
class FixedSource : public BatchSource {
 public:
  FixedSource(ImageTensor image, Mask mask, int batch_size = 1);
  Batch next(Rng& rng) override;

 private:
  Batch batch_;
};

// ---- stages ----------------------------------------------------------------------

struct StageResult {
  Stage stage = Stage::edge;
  long first_step = 0;  // > 0 after a resume
  long final_step = 0;
  std::vector<nlohmann::json> log;
  std::optional<std::filesystem::path> checkpoint;
};

// Trains one stage of `bundle` in place. Upstream networks must already hold
// their trained weights and stay untouched. Writes <dir>/<stage>.ckpt and
// appends to <dir>/loss_log.ndjson when a checkpoint directory is set.
StageResult train_stage(Stage stage, const TrainConfig& config,
                        nn::ModelBundle& bundle, BatchSource& data,
                        const FeatureExtractor* extractor);

// Fresh bundle from config.seed, then the edge stage.
StageResult train_edge_stage(const TrainConfig& config, BatchSource& data,
                             nn::ModelBundle* out = nullptr);
// Loads the edge generator from `edge_ckpt`.
StageResult train_completion_stage(const TrainConfig& config,
                                   BatchSource& data,
                                   const std::filesystem::path& edge_ckpt,
                                   const FeatureExtractor* extractor,
                                   nn::ModelBundle* out = nullptr);
// Loads the edge generator and completion network from `completion_ckpt`.
StageResult train_refinement_stage(
    const TrainConfig& config, BatchSource& data,
    const std::filesystem::path& completion_ckpt,
    const FeatureExtractor* extractor, nn::ModelBundle* out = nullptr);

struct OverfitResult {
  double psnr = 0.0;           // hole region, recomposed output
  double baseline_psnr = 0.0;  // hole region, masked input
  bool losses_finite = true;
  std::vector<nlohmann::json> log;
};

// Trains every stage on one image under one fixed mask and scores the final
// recomposed output on the hole. With zero steps in every stage the masked
// input itself is scored.
OverfitResult overfit_single_image(const TrainConfig& config,
                                   const ImageTensor& image, const Mask& mask,
                                   const FeatureExtractor* extractor);

// Builds a bundle from config.network/config.seed and restores the listed
// networks from an archive.
std::unique_ptr<nn::ModelBundle> bundle_from(
    const TrainConfig& config, const std::filesystem::path& ckpt,
    const std::vector<std::string>& prefixes);

}  // namespace thermfill
