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

#include "thermfill/networks.hpp"

#include <algorithm>

#include "thermfill/errors.hpp"

namespace thermfill::nn {

namespace {

// Inputs arrive in [0, 1]; the networks see [-1, 1].
Var centered(const Var& image) { return affine(image, 2.0, -1.0); }

Var to_unit(const Var& t) { return affine(tanh(t), 0.5, 0.5); }

void require_batch_shape(const Var& a, const Var& b, const char* what) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.c != 1 || sb.c != 1) {
    throw ValidationError(std::string(what) + ": inputs must be single-channel");
  }
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ValidationError(std::string(what) + ": input shapes differ, " +
                          to_string(sa) + " vs " + to_string(sb));
  }
}

Rng& lvalue(Rng&& r) { return r; }

std::vector<ConvNormBlock> make_encoder(ParameterSet& ps, int in, int w,
                                        Rng& rng) {
  std::vector<ConvNormBlock> enc;
  enc.push_back({3, Conv2d(ps, "enc0", in, w, 7, {1, 0, 1}, rng)});
  enc.push_back({0, Conv2d(ps, "enc1", w, 2 * w, 4, {2, 1, 1}, rng)});
  enc.push_back({0, Conv2d(ps, "enc2", 2 * w, 4 * w, 4, {2, 1, 1}, rng)});
  return enc;
}

Var run_encoder(const std::vector<ConvNormBlock>& enc, Var x) {
  for (const auto& block : enc) x = block.forward(x);
  return x;
}

Var run_decoder(const ConvTranspose2d& up1, const ConvTranspose2d& up2,
                const Conv2d& out, Var x) {
  x = relu(instance_norm(up1.forward(x)));
  x = relu(instance_norm(up2.forward(x)));
  return out.forward(reflect_pad(x, 3));
}

}  // namespace

// ---- config -------------------------------------------------------------------------

void NetworkConfig::validate() const {
  if (base_width < 8) throw ValidationError("base_width must be >= 8");
  if (depth < 1) throw ValidationError("depth must be >= 1");
  if (edge_depth < 1) throw ValidationError("edge_depth must be >= 1");
  if (eag_hidden < 1) throw ValidationError("eag_hidden must be >= 1");
  if (disc_width < 1) throw ValidationError("disc_width must be >= 1");
  if (disc_downsamples < 1) {
    throw ValidationError("disc_downsamples must be >= 1");
  }
  if (input_size < 4 || input_size % 4 != 0) {
    throw ValidationError("input_size must be a positive multiple of 4");
  }
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"base_width", base_width},       {"depth", depth},
          {"edge_depth", edge_depth},       {"eag_enabled", eag_enabled},
          {"gated_enabled", gated_enabled}, {"input_size", input_size},
          {"eag_hidden", eag_hidden},       {"disc_width", disc_width},
          {"disc_downsamples", disc_downsamples}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    c.base_width = j.at("base_width").get<int>();
    c.depth = j.at("depth").get<int>();
    c.edge_depth = j.at("edge_depth").get<int>();
    c.eag_enabled = j.at("eag_enabled").get<bool>();
    c.gated_enabled = j.at("gated_enabled").get<bool>();
    c.input_size = j.at("input_size").get<int>();
    c.eag_hidden = j.at("eag_hidden").get<int>();
    c.disc_width = j.at("disc_width").get<int>();
    c.disc_downsamples = j.at("disc_downsamples").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.base_width = 8;
  c.depth = 1;
  c.edge_depth = 1;
  c.eag_hidden = 16;
  c.disc_width = 8;
  c.disc_downsamples = 2;
  c.input_size = 64;
  return c;
}

void require_divisible_by_4(int height, int width, const char* what) {
  if (height <= 0 || width <= 0 || height % 4 != 0 || width % 4 != 0) {
    throw ValidationError(std::string(what) + ": spatial size " +
                          std::to_string(height) + "x" +
                          std::to_string(width) +
                          " is not a positive multiple of 4");
  }
}

Var ConvNormBlock::forward(const Var& x) const {
  Var in = reflect > 0 ? reflect_pad(x, reflect) : x;
  return relu(instance_norm(conv.forward(in)));
}

// ---- edge generator -------------------------------------------------------------

EdgeGenerator::EdgeGenerator(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  const int w = cfg.base_width;
  encoder_ = make_encoder(params_, 3, w, rng);
  for (int i = 0; i < cfg.edge_depth; ++i) {
    const std::string name = "block" + std::to_string(i);
    blocks_.push_back(
        {Conv2d(params_, name + ".conv1", 4 * w, 4 * w, 3, {1, 0, 2}, rng),
         Conv2d(params_, name + ".conv2", 4 * w, 4 * w, 3, {1, 0, 1}, rng)});
  }
  up1_ = ConvTranspose2d(params_, "dec0", 4 * w, 2 * w, 4, 2, 1, rng);
  up2_ = ConvTranspose2d(params_, "dec1", 2 * w, w, 4, 2, 1, rng);
  out_ = Conv2d(params_, "out", w, 1, 7, {1, 0, 1}, rng);
}

Var EdgeGenerator::forward(const Var& image_in, const Var& edge_in,
                           const Var& mask) const {
  require_batch_shape(image_in, edge_in, "edge generator");
  require_batch_shape(image_in, mask, "edge generator");
  require_divisible_by_4(image_in.shape().h, image_in.shape().w,
                         "edge generator");
  Var x = run_encoder(encoder_,
                      concat_channels({centered(image_in), edge_in, mask}));
  for (const auto& b : blocks_) {
    Var h = relu(instance_norm(b.conv1.forward(reflect_pad(x, 2))));
    h = instance_norm(b.conv2.forward(reflect_pad(h, 1)));
    x = add(x, h);
  }
  return sigmoid(run_decoder(up1_, up2_, out_, x));
}

// ---- completion network ---------------------------------------------------------

EagResBlock::EagResBlock(ParameterSet& ps, const std::string& name,
                         int channels, const NetworkConfig& cfg, Rng& rng) {
  norm1_ = EagNorm(ps, name + ".norm1", channels, cfg.eag_hidden,
                   cfg.eag_enabled, rng);
  conv1_ = Conv2d(ps, name + ".conv1", channels, channels, 3, {1, 0, 1}, rng);
  norm2_ = EagNorm(ps, name + ".norm2", channels, cfg.eag_hidden,
                   cfg.eag_enabled, rng);
  conv2_ = Conv2d(ps, name + ".conv2", channels, channels, 3, {1, 0, 1}, rng);
}

Var EagResBlock::forward(const Var& x, const Var& edges) const {
  Var h = conv1_.forward(reflect_pad(relu(norm1_.forward(x, edges)), 1));
  h = conv2_.forward(reflect_pad(relu(norm2_.forward(h, edges)), 1));
  return add(x, h);
}

CompletionNet::CompletionNet(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  const int w = cfg.base_width;
  encoder_ = make_encoder(params_, 2, w, rng);
  for (int i = 0; i < cfg.depth; ++i) {
    blocks_.emplace_back(params_, "block" + std::to_string(i), 4 * w, cfg,
                         rng);
  }
  up1_ = ConvTranspose2d(params_, "dec0", 4 * w, 2 * w, 4, 2, 1, rng);
  up2_ = ConvTranspose2d(params_, "dec1", 2 * w, w, 4, 2, 1, rng);
  out_ = Conv2d(params_, "out", w, 1, 7, {1, 0, 1}, rng);
}

Var CompletionNet::forward(const Var& image_in, const Var& edge_rec,
                           const Var& mask) const {
  require_batch_shape(image_in, edge_rec, "completion network");
  require_batch_shape(image_in, mask, "completion network");
  require_divisible_by_4(image_in.shape().h, image_in.shape().w,
                         "completion network");
  Var x = run_encoder(encoder_, concat_channels({centered(image_in), mask}));
  for (const auto& b : blocks_) x = b.forward(x, edge_rec);
  return to_unit(run_decoder(up1_, up2_, out_, x));
}

// ---- refinement network ---------------------------------------------------------

RefinementNet::RefinementNet(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  const int w = cfg.base_width;
  const bool g = cfg.gated_enabled;
  struct Layout {
    int in, out, kernel, stride, dilation;
    bool up;
  };
  const Layout layouts[] = {
      {2, w, 5, 1, 1, false},          {w, 2 * w, 3, 2, 1, false},
      {2 * w, 2 * w, 3, 1, 1, false},  {2 * w, 4 * w, 3, 2, 1, false},
      {4 * w, 4 * w, 3, 1, 1, false},  {4 * w, 4 * w, 3, 1, 2, false},
      {4 * w, 4 * w, 3, 1, 4, false},  {4 * w, 4 * w, 3, 1, 8, false},
      {4 * w, 4 * w, 3, 1, 1, false},  {4 * w, 2 * w, 3, 1, 1, true},
      {2 * w, 2 * w, 3, 1, 1, false},  {2 * w, w, 3, 1, 1, true},
  };
  int i = 0;
  for (const Layout& s : layouts) {
    stages_.push_back({GatedConv2d(params_, "gconv" + std::to_string(i++),
                                   s.in, s.out, s.kernel, s.stride, s.dilation,
                                   g, rng),
                       s.up});
  }
  out_ = Conv2d(params_, "out", w, 1, 3, {1, 1, 1}, rng);
}

Var RefinementNet::forward(const Var& coarse_rec, const Var& mask) const {
  require_batch_shape(coarse_rec, mask, "refinement network");
  require_divisible_by_4(coarse_rec.shape().h, coarse_rec.shape().w,
                         "refinement network");
  Var x = concat_channels({centered(coarse_rec), mask});
  for (const auto& s : stages_) {
    if (s.upsample_first) x = upsample_nearest(x, 2);
    x = s.conv.forward(x);
  }
  return to_unit(out_.forward(x));
}

// ---- discriminator --------------------------------------------------------------

PatchDiscriminator::PatchDiscriminator(const NetworkConfig& cfg, Rng& rng) {
  cfg.validate();
  const int dw = cfg.disc_width;
  int in = 1;
  int out = dw;
  int idx = 0;
  auto add_layer = [&](int from, int to, int stride) {
    layers_.emplace_back(params_, "conv" + std::to_string(idx++), from, to, 4,
                         ConvOptions{stride, 1, 1}, rng);
    strides_.push_back(stride);
  };
  for (int i = 0; i < cfg.disc_downsamples; ++i) {
    add_layer(in, out, 2);
    in = out;
    out = std::min(out * 2, 8 * dw);
  }
  add_layer(in, out, 1);
  add_layer(out, 1, 1);
}

int PatchDiscriminator::receptive_field() const {
  int rf = 1;
  for (auto it = strides_.rbegin(); it != strides_.rend(); ++it) {
    rf = (rf - 1) * *it + 4;
  }
  return rf;
}

int PatchDiscriminator::output_size(int size) const {
  for (int s : strides_) size = (size + 2 - 4) / s + 1;
  return size;
}

Var PatchDiscriminator::forward(const Var& x, bool training) const {
  const Shape& s = x.shape();
  const int min_side = min_input_size();
  if (s.c != 1) {
    throw ValidationError("discriminator expects single-channel input");
  }
  if (s.h < min_side || s.w < min_side) {
    throw ValidationError("discriminator input " + std::to_string(s.h) + "x" +
                          std::to_string(s.w) + " is below the receptive field " +
                          std::to_string(min_side));
  }
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h, training);
    if (i + 1 < layers_.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

// ---- bundle ---------------------------------------------------------------------

ModelBundle::ModelBundle(const NetworkConfig& cfg, std::uint64_t seed)
    : config(cfg),
      edge_generator(cfg, lvalue(Rng::derive(seed, 1))),
      completion(cfg, lvalue(Rng::derive(seed, 2))),
      refinement(cfg, lvalue(Rng::derive(seed, 3))),
      edge_discriminator(cfg, lvalue(Rng::derive(seed, 4))),
      image_discriminator(cfg, lvalue(Rng::derive(seed, 5))) {}

std::vector<std::pair<std::string, ParameterSet*>>
ModelBundle::parameter_sets() {
  return {{"edge_generator", &edge_generator.params()},
          {"completion", &completion.params()},
          {"refinement", &refinement.params()},
          {"edge_discriminator", &edge_discriminator.params()},
          {"image_discriminator", &image_discriminator.params()}};
}

std::vector<std::pair<std::string, const ParameterSet*>>
ModelBundle::parameter_sets() const {
  return {{"edge_generator", &edge_generator.params()},
          {"completion", &completion.params()},
          {"refinement", &refinement.params()},
          {"edge_discriminator", &edge_discriminator.params()},
          {"image_discriminator", &image_discriminator.params()}};
}

bool ModelBundle::all_finite() const {
  for (const auto& [prefix, ps] : parameter_sets()) {
    for (const auto& p : ps->entries()) {
      if (!p.var.value().all_finite()) return false;
    }
  }
  return true;
}

}  // namespace thermfill::nn
