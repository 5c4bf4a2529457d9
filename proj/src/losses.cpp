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

#include "thermfill/losses.hpp"

#include <algorithm>
#include <cstdlib>

#include "thermfill/errors.hpp"
#include "thermfill/layers.hpp"

namespace thermfill {

using nn::Var;

namespace {

constexpr std::array<double, 3> kImagenetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImagenetStd{0.229, 0.224, 0.225};

// 0 marks a max-pool.
constexpr std::array<int, 21> kVggPlan{64,  64,  0,   128, 128, 0,   256,
                                       256, 256, 256, 0,   512, 512, 512,
                                       512, 0,   512, 512, 512, 512, 0};

void require_extractor(const FeatureExtractor* e) {
  if (e == nullptr) throw ConfigError("loss requires a feature extractor");
}

}  // namespace

std::vector<FeatureExtractor::Layer> FeatureExtractor::topology(int divisor) {
  if (divisor < 1) throw ConfigError("width_divisor must be >= 1");
  std::vector<Layer> layers;
  int channels = 3;
  for (int c : kVggPlan) {
    if (c == 0) {
      layers.push_back({Kind::pool, channels, {}, {}});
    } else {
      channels = std::max(1, c / divisor);
      layers.push_back({Kind::conv, channels, {}, {}});
      layers.push_back({Kind::relu, channels, {}, {}});
    }
  }
  return layers;
}

FeatureExtractor FeatureExtractor::random(const ExtractorOptions& options) {
  FeatureExtractor fx;
  fx.width_divisor_ = options.width_divisor;
  fx.layers_ = topology(options.width_divisor);
  Rng rng(options.seed);
  int in = 3;
  for (auto& layer : fx.layers_) {
    if (layer.kind != Kind::conv) continue;
    const nn::Shape s{layer.channels, in, 3, 3};
    layer.weight = Var(nn::he_normal(s, in * 9, rng));
    layer.bias = Var(nn::Tensor({1, layer.channels, 1, 1}));
    in = layer.channels;
  }
  return fx;
}

FeatureExtractor FeatureExtractor::from_checkpoint(const Checkpoint& ckpt) {
  FeatureExtractor fx;
  fx.width_divisor_ = ckpt.header.value("width_divisor", 1);
  fx.layers_ = topology(fx.width_divisor_);
  fx.pretrained_ = true;
  int in = 3;
  for (int i = 0; i < kLayerCount; ++i) {
    Layer& layer = fx.layers_[i];
    if (layer.kind != Kind::conv) continue;
    const std::string base = "features." + std::to_string(i);
    const nn::Tensor* w = ckpt.find(base + ".weight");
    const nn::Tensor* b = ckpt.find(base + ".bias");
    const nn::Shape ws{layer.channels, in, 3, 3};
    if (w == nullptr || b == nullptr || w->shape() != ws ||
        b->size() != static_cast<std::size_t>(layer.channels)) {
      throw ConfigError("feature extractor weights missing or misshapen at " +
                        base);
    }
    layer.weight = Var(*w);
    layer.bias = Var(nn::Tensor({1, layer.channels, 1, 1},
                                std::vector<double>(b->values().begin(),
                                                    b->values().end())));
    in = layer.channels;
  }
  return fx;
}

std::optional<FeatureExtractor> FeatureExtractor::from_environment() {
  const char* dir = std::getenv(kWeightsDirEnv);
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  const std::filesystem::path p = std::filesystem::path(dir) / kVggWeightsFile;
  if (!std::filesystem::exists(p)) return std::nullopt;
  return from_checkpoint(read_checkpoint(p));
}

std::vector<Var> FeatureExtractor::features(const Var& image,
                                            std::span<const int> taps) const {
  if (image.shape().c != 1) {
    throw ValidationError("feature extractor expects single-channel images");
  }
  int last = -1;
  for (int t : taps) {
    if (t < 0 || t >= kLayerCount) {
      throw ValidationError("feature tap out of range: " + std::to_string(t));
    }
    last = std::max(last, t);
  }
  std::vector<double> scales(3), shifts(3);
  for (int c = 0; c < 3; ++c) {
    scales[c] = 1.0 / kImagenetStd[c];
    shifts[c] = -kImagenetMean[c] / kImagenetStd[c];
  }
  Var x = nn::channel_affine(nn::repeat_channels(image, 3), scales, shifts);
  std::vector<Var> out(taps.size());
  for (int i = 0; i <= last; ++i) {
    const Layer& layer = layers_[i];
    switch (layer.kind) {
      case Kind::conv:
        x = nn::conv2d(x, layer.weight, layer.bias, {1, 1, 1});
        break;
      case Kind::relu:
        x = nn::relu(x);
        break;
      case Kind::pool:
        if (x.shape().h >= 2 && x.shape().w >= 2) x = nn::max_pool2x2(x);
        break;
    }
    for (std::size_t k = 0; k < taps.size(); ++k) {
      if (taps[k] == i) out[k] = x;
    }
  }
  return out;
}

int FeatureExtractor::channels_at(int index) const {
  return layers_.at(index).channels;
}

std::vector<nn::Tensor> FeatureExtractor::snapshot() const {
  std::vector<nn::Tensor> out;
  for (const auto& l : layers_) {
    if (l.kind != Kind::conv) continue;
    out.push_back(l.weight.value());
    out.push_back(l.bias.value());
  }
  return out;
}

// ---- losses -----------------------------------------------------------------------

Var hinge_generator_loss(const Var& fake_scores) {
  return nn::scale(nn::mean(fake_scores), -1.0);
}

Var hinge_discriminator_loss(const Var& real_scores, const Var& fake_scores) {
  return nn::add(nn::mean(nn::relu(nn::affine(real_scores, -1.0, 1.0))),
                 nn::mean(nn::relu(nn::add_scalar(fake_scores, 1.0))));
}

Var gram_matrix(const Var& feature) { return nn::gram_matrix(feature); }

namespace {

void finish(LossReport& r, const std::vector<std::pair<std::string, Var>>& terms,
            const std::map<std::string, double>& weights) {
  Var total;
  for (const auto& [name, term] : terms) {
    const double w = weights.at(name);
    r.components[name] = term.item();
    Var weighted = nn::scale(term, w);
    total = total.defined() ? nn::add(total, weighted) : weighted;
  }
  r.graph = total;
  r.total = total.item();
}

}  // namespace

LossReport reconstruction_loss(const Var& pred, const Var& gt,
                               const FeatureExtractor* extractor,
                               const LossWeights& weights) {
  require_extractor(extractor);
  if (pred.shape() != gt.shape()) {
    throw ValidationError("reconstruction loss: shape mismatch " +
                          nn::to_string(pred.shape()) + " vs " +
                          nn::to_string(gt.shape()));
  }
  std::vector<int> taps(FeatureExtractor::kPerceptualTaps.begin(),
                        FeatureExtractor::kPerceptualTaps.end());
  taps.insert(taps.end(), FeatureExtractor::kStyleTaps.begin(),
              FeatureExtractor::kStyleTaps.end());
  const auto fp = extractor->features(pred, taps);
  const auto fg = extractor->features(gt, taps);
  const std::size_t np = FeatureExtractor::kPerceptualTaps.size();

  Var perceptual;
  Var style;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (i < np) {
      Var d = nn::mean_abs_diff(fp[i], fg[i]);
      perceptual = perceptual.defined() ? nn::add(perceptual, d) : d;
    } else {
      Var d = nn::mean_abs_diff(nn::gram_matrix(fp[i]), nn::gram_matrix(fg[i]));
      style = style.defined() ? nn::add(style, d) : d;
    }
  }
  LossReport r;
  finish(r,
         {{"l1", nn::mean_abs_diff(pred, gt)},
          {"perceptual", perceptual},
          {"style", style}},
         {{"l1", weights.l1},
          {"perceptual", weights.perceptual},
          {"style", weights.style}});
  return r;
}

LossReport stage_loss_completion(const Var& pred, const Var& gt,
                                 const FeatureExtractor* extractor,
                                 const LossWeights& weights) {
  return reconstruction_loss(pred, gt, extractor, weights);
}

LossReport stage_loss_refinement(const Var& pred, const Var& gt,
                                 const Var& fake_scores,
                                 const FeatureExtractor* extractor,
                                 const LossWeights& weights) {
  LossReport r = reconstruction_loss(pred, gt, extractor, weights);
  Var adv = hinge_generator_loss(fake_scores);
  r.components["adversarial"] = adv.item();
  r.graph = nn::add(r.graph, nn::scale(adv, weights.adversarial));
  r.total = r.graph.item();
  return r;
}

LossReport stage_loss_edge(const Var& pred_edges, const Var& gt_edges,
                           const Var& fake_scores, const LossWeights& weights) {
  LossReport r;
  std::vector<std::pair<std::string, Var>> terms{
      {"adversarial", hinge_generator_loss(fake_scores)}};
  std::map<std::string, double> w{{"adversarial", 1.0}};
  if (weights.edge_l1 != 0.0) {
    terms.emplace_back("edge_l1", nn::mean_abs_diff(pred_edges, gt_edges));
    w["edge_l1"] = weights.edge_l1;
  }
  finish(r, terms, w);
  return r;
}

}  // namespace thermfill
