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

#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "thermfill/errors.hpp"
#include "thermfill/image_io.hpp"

namespace thermfill::testing {

namespace fs = std::filesystem;

ImageTensor smooth_tir(int height, int width, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x7469);
  struct Blob {
    double cy, cx, sy, sx, amp;
  };
  std::vector<Blob> blobs;
  const int n = 3 + static_cast<int>(rng.next() % 3);
  for (int i = 0; i < n; ++i) {
    blobs.push_back({rng.uniform(0.1, 0.9) * height, rng.uniform(0.1, 0.9) * width,
                     rng.uniform(0.12, 0.3) * height, rng.uniform(0.12, 0.3) * width,
                     rng.uniform(0.15, 0.35)});
  }
  const double top = rng.uniform(0.2, 0.35);
  const double bottom = rng.uniform(0.3, 0.45);
  ImageTensor img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = top + (bottom - top) * y / std::max(1, height - 1);
      for (const auto& b : blobs) {
        const double dy = (y - b.cy) / b.sy;
        const double dx = (x - b.cx) / b.sx;
        v += b.amp * std::exp(-0.5 * (dy * dy + dx * dx));
      }
      img.at(y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
  }
  return img;
}

Mask stroke_mask(int height, int width, double lower, double upper,
                 std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x6d61736b);
  return generate_stroke_mask(rng, MaskBucket{lower, upper, false}, height, width);
}

ImageTensor random_image(int height, int width, Rng& rng) {
  ImageTensor img(height, width);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  return img;
}

Mask random_mask(int height, int width, Rng& rng, double hole_probability) {
  Mask m(height, width);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = rng.uniform() < hole_probability ? 0 : 1;
  }
  return m;
}

nn::Tensor random_tensor(nn::Shape shape, Rng& rng, double scale) {
  nn::Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "thermfill-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw IoError("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path write_fixture_dataset(const fs::path& dir, int count, int height,
                               int width, bool with_masks) {
  fs::create_directories(dir / "images");
  if (with_masks) fs::create_directories(dir / "masks");
  std::ostringstream manifest;
  for (int i = 0; i < count; ++i) {
    const std::string name = "scene" + std::to_string(i) + ".png";
    io::write_png(dir / "images" / name, smooth_tir(height, width, 1000 + i));
    manifest << "images/" << name;
    if (with_masks) {
      // Spread the fixture masks across the ratio buckets.
      const auto& b = mask_buckets()[static_cast<std::size_t>(i) % kBucketCount];
      io::write_png(dir / "masks" / name,
                    stroke_mask(height, width, b.lower, b.upper, 2000 + i));
      manifest << "\tmasks/" << name;
    }
    manifest << "\n";
  }
  const fs::path path = dir / "manifest.txt";
  std::ofstream(path) << manifest.str();
  return path;
}

CommandResult run_command(const std::string& command) {
  CommandResult r;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
    r.output.append(buf.data(), n);
  }
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string cli_path() { return THERMFILL_CLI; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

GradCheck check_gradients(const std::function<nn::Var()>& scalar_fn,
                          std::vector<nn::Var> leaves, double step,
                          std::size_t max_coords, std::uint64_t seed) {
  for (auto& l : leaves) l.zero_grad();
  scalar_fn().backward();
  GradCheck out;
  Rng rng(seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    nn::Var& leaf = leaves[li];
    const std::size_t size = leaf.value().size();
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), 0);
    for (std::size_t i = size; i > 1; --i) {
      std::swap(coords[i - 1], coords[rng.next() % i]);
    }
    coords.resize(std::min(size, max_coords));
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto central = [&](std::size_t c, double h) {
      nn::NoGradGuard guard;
      const double saved = leaf.value()[c];
      leaf.mutable_value()[c] = saved + h;
      const double plus = scalar_fn().item();
      leaf.mutable_value()[c] = saved - h;
      const double minus = scalar_fn().item();
      leaf.mutable_value()[c] = saved;
      return (plus - minus) / (2.0 * h);
    };
    for (std::size_t c : coords) {
      const double analytic = leaf.has_grad() ? leaf.grad()[c] : 0.0;
      auto agree = [](double a, double b) {
        return std::abs(a - b) <= 1e-4 * std::max(std::abs(a), std::abs(b)) + 1e-7;
      };
      // Shrink the step while a kink lies within it.
      double numeric = central(c, step);
      double fine = central(c, step / 10.0);
      if (!agree(numeric, fine)) {
        numeric = fine;
        fine = central(c, step / 100.0);
      }
      ++out.probed;
      if (!agree(numeric, fine)) {
        ++out.skipped;
        continue;
      }
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), kGradNormFloor});
    const double rel = std::sqrt(diff2) / denom;
    if (rel >= out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_leaf = "leaf " + std::to_string(li);
    }
  }
  return out;
}

void jitter_biases(nn::ParameterSet& params, Rng& rng) {
  for (auto& p : params.entries()) {
    if (p.name.ends_with(".bias")) p.var.mutable_value() = random_tensor(p.var.shape(), rng, 0.1);
  }
}

nn::Var random_projection(const nn::Var& x, std::uint64_t seed) {
  Rng rng(seed);
  nn::Var w(random_tensor(x.shape(), rng));
  return nn::sum(nn::mul(x, w));
}

}  // namespace thermfill::testing
