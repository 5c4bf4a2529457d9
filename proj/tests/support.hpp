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

// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "thermfill/autograd.hpp"
#include "thermfill/data_pipeline.hpp"
#include "thermfill/image.hpp"
#include "thermfill/layers.hpp"
#include "thermfill/rng.hpp"

namespace thermfill::testing {

// Smooth synthetic thermal scene: a vertical temperature gradient plus a few
// warm Gaussian bodies, quantized to 8-bit levels so PNG round trips are exact.
ImageTensor smooth_tir(int height, int width, std::uint64_t seed);

// Stroke mask whose hole ratio lies in [lower, upper).
Mask stroke_mask(int height, int width, double lower, double upper,
                 std::uint64_t seed);

ImageTensor random_image(int height, int width, Rng& rng);
Mask random_mask(int height, int width, Rng& rng, double hole_probability);
nn::Tensor random_tensor(nn::Shape shape, Rng& rng, double scale = 1.0);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

// Writes `count` PNG scenes into dir/images and a manifest listing them.
std::filesystem::path write_fixture_dataset(const std::filesystem::path& dir,
                                            int count, int height, int width,
                                            bool with_masks = false);

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};
CommandResult run_command(const std::string& command);
// Path of the CLI binary under test.
std::string cli_path();

std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Central finite differences of a scalar function against backprop for every
// leaf in `leaves`. At most `max_coords` coordinates per leaf are probed.
// Returns max over leaves of |analytic - numeric| / max(|analytic|, |numeric|,
// kGradNormFloor) taken as vector norms over the probed coordinates. The floor
// covers leaves whose gradient is exactly zero, such as a bias feeding
// instance norm. Differences at `step` and `step / 10` must agree, else the
// pair moves down one decade; a coordinate that still disagrees sits on a
// kink and is skipped and counted.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradNormFloor = 1e-5;
struct GradCheck {
  double max_relative_error = 0.0;
  std::string worst_leaf;
  std::size_t probed = 0;
  std::size_t skipped = 0;
};
GradCheck check_gradients(const std::function<nn::Var()>& scalar_fn,
                          std::vector<nn::Var> leaves, double step = kFdStep,
                          std::size_t max_coords = 48,
                          std::uint64_t seed = 7);

// Sets every "*.bias" entry to small random values so zero-initialized
// biases do not sit exactly on a ReLU kink during finite differences.
void jitter_biases(nn::ParameterSet& params, Rng& rng);

// Scalar <w, x> with fixed random weights, to project a tensor output.
nn::Var random_projection(const nn::Var& x, std::uint64_t seed);

}  // namespace thermfill::testing
