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

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermfill/data_pipeline.hpp"
#include "thermfill/losses.hpp"

namespace thermfill {

inline constexpr double kPsnrCap = 100.0;

double mean_squared_error(const ImageTensor& pred, const ImageTensor& gt,
                          const Mask* hole_only = nullptr);
// 10 log10(1 / MSE) with peak 1; identical inputs give kPsnrCap. With
// `hole_only` the error is averaged over the mask's zero entries.
double psnr(const ImageTensor& pred, const ImageTensor& gt,
            const Mask* hole_only = nullptr);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
// Gaussian-window SSIM averaged over valid window positions.
double ssim(const ImageTensor& pred, const ImageTensor& gt);

inline constexpr const char* kLpipsWeightsFile = "lpips_vgg19.ckpt";

// Unit-normalized VGG activations compared with per-channel weights.
class LpipsModel {
 public:
  // One weight vector per tap, sized to that tap's channel count.
  LpipsModel(FeatureExtractor extractor,
             std::vector<std::vector<double>> weights);

  // Fixed-seed random backbone with uniform weights; offline substitute.
  static LpipsModel random(const ExtractorOptions& options = {});
  // Backbone from vgg19.ckpt plus "lin.<k>.weight" tensors from
  // lpips_vgg19.ckpt, both under $TIRFILL_WEIGHTS_DIR.
  static std::optional<LpipsModel> from_environment();

  double distance(const ImageTensor& a, const ImageTensor& b) const;
  bool calibrated() const { return extractor_.pretrained(); }

 private:
  FeatureExtractor extractor_;
  std::vector<std::vector<double>> weights_;
};

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased covariance; needs at least two rows.
FeatureStats feature_stats(const std::vector<Eigen::VectorXd>& features);

struct FidDiagnostics {
  double most_negative_eigenvalue = 0.0;
  std::vector<std::string> warnings;
};

// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (sqrt(S1) S2 sqrt(S1))^(1/2)). Negative
// eigenvalues are clamped to zero; a warning is recorded past 1e-6 and a
// NumericalError thrown past 1e-3, both relative to max(1, largest).
double fid(const FeatureStats& a, const FeatureStats& b,
           FidDiagnostics* diagnostics = nullptr);

class FidExtractor {
 public:
  virtual ~FidExtractor() = default;
  virtual Eigen::VectorXd embed(const ImageTensor& image) const = 0;
  virtual std::string name() const = 0;
};

// Three stride-2 3x3 convs with ReLU and global average pooling.
class RandomConvFidExtractor : public FidExtractor {
 public:
  explicit RandomConvFidExtractor(std::uint64_t seed = 0x666964);
  Eigen::VectorXd embed(const ImageTensor& image) const override;
  std::string name() const override { return "random-conv-64"; }

 private:
  std::vector<nn::Var> weights_;
  std::vector<nn::Var> biases_;
};

// ---- evaluation -----------------------------------------------------------------

struct EvalSample {
  std::size_t index;
  const ImageTensor& ground_truth;
  const ImageTensor& masked_input;
  const Mask& mask;
};

// Returns the raw generator output for a sample.
using InpaintFn = std::function<ImageTensor(const EvalSample&)>;

struct EvalOptions {
  bool hole_only = false;
  bool raw_output = false;  // skip recomposition before scoring
  std::uint64_t seed = 0;   // generated masks
};

struct BucketMetrics {
  std::size_t count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
  std::optional<double> fid;
};

struct MetricsReport {
  std::array<std::optional<BucketMetrics>, kBucketCount> buckets;
  std::optional<BucketMetrics> average;
  std::size_t unbucketed = 0;
  bool hole_only = false;
  bool raw_output = false;
  std::string lpips_backbone;  // empty when unavailable
  std::string fid_extractor;
  std::vector<std::string> warnings;

  std::size_t row_count() const;
  nlohmann::json to_json() const;
  // Metrics as rows, the six buckets plus "Average" as columns.
  std::string to_table() const;
  void write(const std::filesystem::path& json_path,
             const std::filesystem::path& table_path) const;
};

struct MetricModels {
  const LpipsModel* lpips = nullptr;
  const FidExtractor* fid = nullptr;
};

// With `masks` each image is scored once under its own mask and bucketed by
// mask_ratio; without, every image is scored under one generated mask per
// bucket.
MetricsReport evaluate(const std::vector<ImageTensor>& images,
                       const std::vector<Mask>* masks, const InpaintFn& model,
                       const MetricModels& models,
                       const EvalOptions& options = {});

}  // namespace thermfill
