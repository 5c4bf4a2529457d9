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

#include "thermfill/training.hpp"

#include <cmath>
#include <fstream>

#include "thermfill/edge_ops.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/metrics.hpp"
#include "thermfill/pipeline.hpp"

namespace thermfill {

using nn::Tensor;
using nn::Var;

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::edge:
      return "edge";
    case Stage::completion:
      return "completion";
    case Stage::refinement:
      return "refinement";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "edge") return Stage::edge;
  if (name == "completion") return Stage::completion;
  if (name == "refinement") return Stage::refinement;
  throw ConfigError("unknown stage '" + name + "'");
}

// ---- config -------------------------------------------------------------------------

void TrainConfig::validate() const {
  network.validate();
  for (double lr : {lr_edge, lr_completion, lr_refinement}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
      throw ConfigError("learning rates must be positive");
    }
  }
  for (double b : {adam_beta1, adam_beta2}) {
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps_edge < 0 || steps_completion < 0 || steps_refinement < 0) {
    throw ConfigError("step counts must be >= 0");
  }
  if (!(canny_low >= 0.0 && canny_low < canny_high && canny_high <= 255.0)) {
    throw ConfigError("canny thresholds must satisfy 0 <= low < high <= 255");
  }
  if (extractor_width_divisor < 1) {
    throw ConfigError("extractor_width_divisor must be >= 1");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

int TrainConfig::steps(Stage stage) const {
  switch (stage) {
    case Stage::edge:
      return steps_edge;
    case Stage::completion:
      return steps_completion;
    case Stage::refinement:
      return steps_refinement;
  }
  return 0;
}

double TrainConfig::learning_rate(Stage stage) const {
  switch (stage) {
    case Stage::edge:
      return lr_edge;
    case Stage::completion:
      return lr_completion;
    case Stage::refinement:
      return lr_refinement;
  }
  return 0.0;
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"network", network.to_json()},
      {"lr_edge", lr_edge},
      {"lr_completion", lr_completion},
      {"lr_refinement", lr_refinement},
      {"adam_beta1", adam_beta1},
      {"adam_beta2", adam_beta2},
      {"adam_eps", adam_eps},
      {"batch_size", batch_size},
      {"steps_edge", steps_edge},
      {"steps_completion", steps_completion},
      {"steps_refinement", steps_refinement},
      {"seed", seed},
      {"deterministic", deterministic},
      {"joint_finetune", joint_finetune},
      {"mask_input_edges", mask_input_edges},
      {"canny_low", canny_low},
      {"canny_high", canny_high},
      {"w_l1", loss.l1},
      {"w_perc", loss.perceptual},
      {"w_style", loss.style},
      {"w_adv", loss.adversarial},
      {"edge_l1_weight", loss.edge_l1},
      {"extractor_width_divisor", extractor_width_divisor},
      {"mask_mode", mask_mode == MaskMode::buckets ? "buckets" : "files"},
  };
}

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.network = nn::NetworkConfig::tiny();
  c.batch_size = 1;
  c.extractor_width_divisor = 16;
  c.steps_edge = 10;
  c.steps_completion = 10;
  c.steps_refinement = 10;
  return c;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                      Stage stage) {
  return dir / (to_string(stage) + ".ckpt");
}

// ---- Adam ---------------------------------------------------------------------------

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t,
               double lr, double beta1, double beta2, double eps) {
  if (t < 1) throw TrainingError("adam step count must be >= 1");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mh = m[i] / c1;
    const double vh = v[i] / c2;
    param[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

Adam::Adam(nn::ParameterSet& params, std::string prefix, double lr,
           double beta1, double beta2, double eps)
    : params_(&params),
      prefix_(std::move(prefix)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  for (const auto& p : params_->entries()) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step() {
  auto& entries = params_->entries();
  for (const auto& p : entries) {
    if (!p.trainable || !p.var.has_grad()) continue;
    if (!p.var.grad().all_finite()) {
      throw TrainingError("non-finite gradient in " + prefix_ + "." + p.name);
    }
  }
  ++t_;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i];
    if (!p.trainable || !p.var.has_grad()) continue;
    adam_step(p.var.mutable_value(), p.var.grad(), m_[i], v_[i], t_, lr_,
              beta1_, beta2_, eps_);
    p.var.zero_grad();
  }
}

void Adam::store(Checkpoint& ckpt) const {
  ckpt.header["adam_steps"][prefix_] = t_;
  const auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    ckpt.add("adam." + prefix_ + ".m." + entries[i].name, m_[i]);
    ckpt.add("adam." + prefix_ + ".v." + entries[i].name, v_[i]);
  }
}

void Adam::restore(const Checkpoint& ckpt) {
  t_ = ckpt.header.at("adam_steps").at(prefix_).get<long>();
  const auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    const Tensor* m = ckpt.find("adam." + prefix_ + ".m." + entries[i].name);
    const Tensor* v = ckpt.find("adam." + prefix_ + ".v." + entries[i].name);
    if (m == nullptr || v == nullptr || m->shape() != m_[i].shape() ||
        v->shape() != v_[i].shape()) {
      throw IoError("checkpoint lacks optimizer state for " + prefix_ + "." +
                    entries[i].name);
    }
    m_[i] = *m;
    v_[i] = *v;
  }
}

// ---- data -----------------------------------------------------------------------------

ManifestSource::ManifestSource(const DatasetManifest& manifest, int size,
                               int batch_size, MaskMode mode)
    : size_(size), batch_size_(batch_size), mode_(mode) {
  if (manifest.count() == 0) throw ValidationError("manifest has no entries");
  for (const auto& e : manifest.entries) {
    images_.push_back(load_tir_image(e.image));
    if (e.mask) mask_files_.push_back(*e.mask);
  }
  if (mode_ == MaskMode::files && mask_files_.empty()) {
    throw ConfigError("mask_mode=files needs a mask column in the manifest");
  }
}

Batch ManifestSource::next(Rng& rng) {
  std::vector<ImageTensor> images;
  std::vector<Mask> masks;
  TrainCropOptions crop;
  crop.output_size = size_;
  for (int b = 0; b < batch_size_; ++b) {
    const int idx = rng.uniform_int(0, static_cast<int>(images_.size()) - 1);
    images.push_back(train_preprocess(images_[idx], rng, crop));
    if (mode_ == MaskMode::buckets) {
      const int bucket = rng.uniform_int(0, kBucketCount - 1);
      masks.push_back(generate_stroke_mask(rng, mask_buckets()[bucket], size_,
                                           size_));
    } else {
      const int m = rng.uniform_int(0, static_cast<int>(mask_files_.size()) - 1);
      masks.push_back(load_mask(mask_files_[m], size_, size_));
    }
  }
  return {stack(images), stack(masks)};
}

FixedSource::FixedSource(ImageTensor image, Mask mask, int batch_size) {
  require_same_size(image, mask, "fixed source");
  std::vector<ImageTensor> images(batch_size, image);
  std::vector<Mask> masks(batch_size, mask);
  batch_ = {stack(images), stack(masks)};
}

Batch FixedSource::next(Rng&) { return batch_; }

// ---- stage steps ---------------------------------------------------------------------

namespace {

struct Prepared {
  Var gt;
  Var mask;
  Var image_in;
  Var edge_in;
  Var edge_gt;
};

Prepared prepare(const Batch& batch, const TrainConfig& cfg) {
  const nn::Shape s = batch.images.shape();
  Prepared p;
  p.gt = Var(batch.images);
  p.mask = Var(batch.masks);
  Tensor masked(s);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    masked[i] = batch.images[i] * batch.masks[i];
  }
  Tensor edge_in(s);
  Tensor edge_gt(s);
  for (int n = 0; n < s.n; ++n) {
    const ImageTensor gt = image_from_tensor(batch.images, n);
    const ImageTensor in = image_from_tensor(masked, n);
    const Mask m = [&] {
      Mask out(s.h, s.w);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = batch.masks.plane(n, 0)[i] == 1.0 ? 1 : 0;
      }
      return out;
    }();
    const EdgeMap ci =
        input_edges(in, m, cfg.mask_input_edges, cfg.canny_low, cfg.canny_high);
    const EdgeMap cg = canny(gt, cfg.canny_low, cfg.canny_high);
    for (std::size_t i = 0; i < ci.size(); ++i) {
      edge_in.plane(n, 0)[i] = ci[i];
      edge_gt.plane(n, 0)[i] = cg[i];
    }
  }
  p.image_in = Var(std::move(masked));
  p.edge_in = Var(std::move(edge_in));
  p.edge_gt = Var(std::move(edge_gt));
  return p;
}

// C_rec from the frozen edge generator: known edges in valid pixels,
// binarized predictions in the holes.
Var reconstructed_edges(const nn::ModelBundle& bundle, const Prepared& p) {
  nn::NoGradGuard guard;
  const Var prob = bundle.edge_generator.forward(p.image_in, p.edge_in, p.mask);
  Tensor rec(prob.shape());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    rec[i] = p.mask.value()[i] == 1.0 ? p.edge_in.value()[i]
                                      : binarize(prob.value()[i]);
  }
  return Var(std::move(rec));
}

bool finite(double v) { return std::isfinite(v); }

nlohmann::json record(Stage stage, long step, const LossReport& g,
                      std::optional<double> d_loss) {
  nlohmann::json j;
  j["stage"] = to_string(stage);
  j["step"] = step;
  j["total"] = g.total;
  for (const auto& [k, v] : g.components) j[k] = v;
  if (d_loss) j["d_loss"] = *d_loss;
  return j;
}

struct Optimizers {
  std::vector<std::unique_ptr<Adam>> list;
  Adam* gen = nullptr;
  Adam* disc = nullptr;
  Adam* extra = nullptr;  // completion net under joint fine-tuning
};

Optimizers make_optimizers(Stage stage, const TrainConfig& cfg,
                           nn::ModelBundle& b) {
  Optimizers o;
  const double lr = cfg.learning_rate(stage);
  auto make = [&](nn::ParameterSet& ps, const char* prefix, double rate) {
    o.list.push_back(std::make_unique<Adam>(ps, prefix, rate, cfg.adam_beta1,
                                            cfg.adam_beta2, cfg.adam_eps));
    return o.list.back().get();
  };
  switch (stage) {
    case Stage::edge:
      o.gen = make(b.edge_generator.params(), "edge_generator", lr);
      o.disc = make(b.edge_discriminator.params(), "edge_discriminator", lr);
      break;
    case Stage::completion:
      o.gen = make(b.completion.params(), "completion", lr);
      break;
    case Stage::refinement:
      o.gen = make(b.refinement.params(), "refinement", lr);
      o.disc = make(b.image_discriminator.params(), "image_discriminator", lr);
      if (cfg.joint_finetune) {
        o.extra = make(b.completion.params(), "completion", cfg.lr_completion);
      }
      break;
  }
  return o;
}

nlohmann::json run_step(Stage stage, long step, const TrainConfig& cfg,
                        nn::ModelBundle& b, const Batch& batch,
                        const FeatureExtractor* extractor, Optimizers& opt) {
  const Prepared p = prepare(batch, cfg);
  switch (stage) {
    case Stage::edge: {
      const Var pred = b.edge_generator.forward(p.image_in, p.edge_in, p.mask);
      b.edge_discriminator.params().zero_grad();
      Var d_loss = hinge_discriminator_loss(
          b.edge_discriminator.forward(p.edge_gt, true),
          b.edge_discriminator.forward(pred.detach(), true));
      const double d_value = d_loss.item();
      d_loss.backward();
      opt.disc->step();
      b.edge_generator.params().zero_grad();
      LossReport g = stage_loss_edge(
          pred, p.edge_gt, b.edge_discriminator.forward(pred, false), cfg.loss);
      g.graph.backward();
      opt.gen->step();
      b.edge_discriminator.params().zero_grad();
      return record(stage, step, g, d_value);
    }
    case Stage::completion: {
      const Var edges = reconstructed_edges(b, p);
      b.completion.params().zero_grad();
      const Var pred = b.completion.forward(p.image_in, edges, p.mask);
      LossReport g = stage_loss_completion(pred, p.gt, extractor, cfg.loss);
      g.graph.backward();
      opt.gen->step();
      return record(stage, step, g, std::nullopt);
    }
    case Stage::refinement: {
      const Var edges = reconstructed_edges(b, p);
      Var coarse_rec;
      if (opt.extra != nullptr) {
        b.completion.params().zero_grad();
        coarse_rec = nn::recompose(
            p.image_in, b.completion.forward(p.image_in, edges, p.mask),
            p.mask.value());
      } else {
        nn::NoGradGuard guard;
        coarse_rec = nn::recompose(
            p.image_in, b.completion.forward(p.image_in, edges, p.mask),
            p.mask.value());
      }
      b.refinement.params().zero_grad();
      const Var refined = b.refinement.forward(coarse_rec, p.mask);
      b.image_discriminator.params().zero_grad();
      Var d_loss = hinge_discriminator_loss(
          b.image_discriminator.forward(p.gt, true),
          b.image_discriminator.forward(refined.detach(), true));
      const double d_value = d_loss.item();
      d_loss.backward();
      opt.disc->step();
      LossReport g = stage_loss_refinement(
          refined, p.gt, b.image_discriminator.forward(refined, false),
          extractor, cfg.loss);
      g.graph.backward();
      opt.gen->step();
      if (opt.extra != nullptr) opt.extra->step();
      b.image_discriminator.params().zero_grad();
      return record(stage, step, g, d_value);
    }
  }
  return {};
}

void save_stage(const std::filesystem::path& path, Stage stage, long step,
                const TrainConfig& cfg, const nn::ModelBundle& b,
                const Optimizers& opt, const Rng& rng) {
  Checkpoint ckpt;
  ckpt.header["format_version"] = 1;
  ckpt.header["stage"] = to_string(stage);
  ckpt.header["step"] = step;
  ckpt.header["train"] = cfg.to_json();
  ckpt.header["rng"] = rng.state();
  store_bundle(ckpt, b);
  for (const auto& o : opt.list) o->store(ckpt);
  write_checkpoint(path, ckpt,
                   cfg.deterministic ? Precision::f64 : Precision::f32);
}

void append_log(const std::filesystem::path& dir,
                const std::vector<nlohmann::json>& records) {
  if (records.empty()) return;
  std::ofstream out(dir / kLossLogFile, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + (dir / kLossLogFile).string());
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace

StageResult train_stage(Stage stage, const TrainConfig& cfg,
                        nn::ModelBundle& bundle, BatchSource& data,
                        const FeatureExtractor* extractor) {
  cfg.validate();
  if (stage != Stage::edge && extractor == nullptr) {
    throw ConfigError(to_string(stage) + " stage requires a feature extractor");
  }
  const long target = cfg.steps(stage);
  Optimizers opt = make_optimizers(stage, cfg, bundle);
  Rng rng = Rng::derive(cfg.seed, 100 + static_cast<int>(stage));
  StageResult result;
  result.stage = stage;

  const bool persist = !cfg.checkpoint_dir.empty();
  std::filesystem::path path;
  long step = 0;
  if (persist) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    path = checkpoint_path(cfg.checkpoint_dir, stage);
    if (cfg.resume && std::filesystem::exists(path)) {
      const Checkpoint ckpt = read_checkpoint(path);
      if (ckpt.header.value("stage", "") != to_string(stage)) {
        throw IoError(path.string() + " belongs to another stage");
      }
      restore_bundle(ckpt, bundle);
      for (auto& o : opt.list) o->restore(ckpt);
      rng.set_state(ckpt.header.at("rng").get<std::string>());
      step = ckpt.header.at("step").get<long>();
    }
  }
  result.first_step = step;
  std::optional<std::filesystem::path> last_good;
  std::vector<nlohmann::json> pending;
  auto flush = [&] {
    if (!persist) return;
    append_log(cfg.checkpoint_dir, pending);
    pending.clear();
  };

  for (; step < target; ++step) {
    const Batch batch = data.next(rng);
    nlohmann::json rec;
    try {
      rec = run_step(stage, step + 1, cfg, bundle, batch, extractor, opt);
    } catch (const TrainingError& e) {
      flush();
      throw TrainingError(std::string(e.what()) + " at " + to_string(stage) +
                          " step " + std::to_string(step + 1) +
                          "; last good checkpoint: " +
                          (last_good ? last_good->string() : "none"));
    }
    bool ok = true;
    for (const auto& [k, v] : rec.items()) {
      if (v.is_number_float() && !finite(v.get<double>())) ok = false;
    }
    if (!ok) {
      flush();
      throw TrainingError("loss diverged at " + to_string(stage) + " step " +
                          std::to_string(step + 1) + "; last good checkpoint: " +
                          (last_good ? last_good->string() : "none"));
    }
    result.log.push_back(rec);
    pending.push_back(std::move(rec));
    if (persist && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0) {
      save_stage(path, stage, step + 1, cfg, bundle, opt, rng);
      flush();
      last_good = path;
    }
  }
  if (persist) {
    save_stage(path, stage, step, cfg, bundle, opt, rng);
    flush();
    result.checkpoint = path;
  }
  result.final_step = step;
  return result;
}

std::unique_ptr<nn::ModelBundle> bundle_from(
    const TrainConfig& config, const std::filesystem::path& ckpt,
    const std::vector<std::string>& prefixes) {
  if (!std::filesystem::exists(ckpt)) {
    throw IoError("missing upstream checkpoint " + ckpt.string());
  }
  auto bundle = std::make_unique<nn::ModelBundle>(config.network, config.seed);
  restore_bundle(read_checkpoint(ckpt), *bundle, prefixes);
  return bundle;
}

namespace {

void hand_out(std::unique_ptr<nn::ModelBundle>& b, nn::ModelBundle* out) {
  if (out == nullptr) return;
  for (std::size_t i = 0; i < b->parameter_sets().size(); ++i) {
    auto& dst = out->parameter_sets()[i].second->entries();
    auto& src = b->parameter_sets()[i].second->entries();
    if (dst.size() != src.size()) {
      throw ValidationError("output bundle has a different architecture");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k].var.mutable_value() = src[k].var.value();
    }
  }
}

}  // namespace

StageResult train_edge_stage(const TrainConfig& config, BatchSource& data,
                             nn::ModelBundle* out) {
  auto b = std::make_unique<nn::ModelBundle>(config.network, config.seed);
  StageResult r = train_stage(Stage::edge, config, *b, data, nullptr);
  hand_out(b, out);
  return r;
}

StageResult train_completion_stage(const TrainConfig& config,
                                   BatchSource& data,
                                   const std::filesystem::path& edge_ckpt,
                                   const FeatureExtractor* extractor,
                                   nn::ModelBundle* out) {
  auto b = bundle_from(config, edge_ckpt,
                       {"edge_generator", "edge_discriminator"});
  StageResult r = train_stage(Stage::completion, config, *b, data, extractor);
  hand_out(b, out);
  return r;
}

StageResult train_refinement_stage(const TrainConfig& config,
                                   BatchSource& data,
                                   const std::filesystem::path& completion_ckpt,
                                   const FeatureExtractor* extractor,
                                   nn::ModelBundle* out) {
  auto b = bundle_from(config, completion_ckpt,
                       {"edge_generator", "edge_discriminator", "completion"});
  StageResult r = train_stage(Stage::refinement, config, *b, data, extractor);
  hand_out(b, out);
  return r;
}

OverfitResult overfit_single_image(const TrainConfig& config,
                                   const ImageTensor& image, const Mask& mask,
                                   const FeatureExtractor* extractor) {
  require_same_size(image, mask, "overfit");
  OverfitResult r;
  const ImageTensor masked = apply_mask(image, mask);
  r.baseline_psnr = psnr(masked, image, &mask);
  if (config.steps_edge + config.steps_completion + config.steps_refinement ==
      0) {
    r.psnr = r.baseline_psnr;
    return r;
  }
  TrainConfig cfg = config;
  cfg.batch_size = 1;
  auto bundle = std::make_shared<nn::ModelBundle>(cfg.network, cfg.seed);
  FixedSource data(image, mask, 1);
  for (Stage s : {Stage::edge, Stage::completion, Stage::refinement}) {
    StageResult sr = train_stage(s, cfg, *bundle, data, extractor);
    r.log.insert(r.log.end(), sr.log.begin(), sr.log.end());
  }
  for (const auto& rec : r.log) {
    for (const auto& [k, v] : rec.items()) {
      if (v.is_number_float() && !std::isfinite(v.get<double>())) {
        r.losses_finite = false;
      }
    }
  }
  InpaintOptions opts;
  opts.mask_input_edges = cfg.mask_input_edges;
  opts.canny_low = cfg.canny_low;
  opts.canny_high = cfg.canny_high;
  const Inpainter inpainter(bundle, opts);
  r.psnr = psnr(inpainter.run(image, mask).result, image, &mask);
  return r;
}

}  // namespace thermfill
