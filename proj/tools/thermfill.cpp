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

// thermfill: train | eval | infer | edges | serve
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermfill/checkpoint.hpp"
#include "thermfill/config.hpp"
#include "thermfill/data_pipeline.hpp"
#include "thermfill/edge_ops.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/image_io.hpp"
#include "thermfill/losses.hpp"
#include "thermfill/metrics.hpp"
#include "thermfill/pipeline.hpp"
#include "thermfill/service.hpp"
#include "thermfill/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace thermfill;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr const char* kTrainReportFile = "train_report.json";

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string preset = "default";
  std::string stage = "all";
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool no_eag = false;
  bool resume = false;
  std::map<std::string, std::string> overrides;
};

TrainConfig build_train_config(const TrainArgs& a) {
  TrainConfig cfg;
  if (a.preset == "tiny") {
    cfg = TrainConfig::tiny();
  } else if (a.preset != "default") {
    throw ConfigError("unknown preset '" + a.preset + "'");
  }
  if (!a.config.empty()) apply_config(cfg, read_config_file(a.config));
  ConfigValues flags;
  for (const auto& [k, v] : a.overrides) {
    if (!v.empty()) flags[k] = v;
  }
  apply_config(cfg, flags);
  if (a.seed) cfg.seed = *a.seed;
  if (a.no_eag) cfg.network.eag_enabled = false;
  if (a.resume) cfg.resume = true;
  if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = "checkpoints";
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (--manifest)");
  cfg.validate();
  return cfg;
}

std::vector<Stage> requested_stages(const std::string& name) {
  if (name == "all") return {Stage::edge, Stage::completion, Stage::refinement};
  return {parse_stage(name)};
}

void set_steps(TrainConfig& cfg, Stage s, int steps) {
  switch (s) {
    case Stage::edge: cfg.steps_edge = steps; break;
    case Stage::completion: cfg.steps_completion = steps; break;
    case Stage::refinement: cfg.steps_refinement = steps; break;
  }
}

std::unique_ptr<FeatureExtractor> training_extractor(const TrainConfig& cfg) {
  if (auto e = FeatureExtractor::from_environment()) {
    return std::make_unique<FeatureExtractor>(std::move(*e));
  }
  std::cerr << "warning: " << kWeightsDirEnv << "/" << kVggWeightsFile
            << " not found; perceptual and style losses use a fixed-seed "
               "random extractor\n";
  ExtractorOptions o;
  o.width_divisor = cfg.extractor_width_divisor;
  return std::make_unique<FeatureExtractor>(FeatureExtractor::random(o));
}

int cmd_train(const TrainArgs& args) {
  TrainConfig cfg = build_train_config(args);
  const std::vector<Stage> stages = requested_stages(args.stage);
  if (args.steps) {
    if (*args.steps < 0) throw ConfigError("--steps must be >= 0");
    for (Stage s : stages) set_steps(cfg, s, *args.steps);
  }
  const DatasetManifest manifest = DatasetManifest::load(cfg.manifest, Split::train);
  ManifestSource data(manifest, cfg.network.input_size, cfg.batch_size,
                      cfg.mask_mode);
  std::unique_ptr<FeatureExtractor> extractor;

  json report = {{"seed", cfg.seed}, {"stages", json::array()}};
  for (Stage s : stages) {
    StageResult r;
    if (s == Stage::edge) {
      r = train_edge_stage(cfg, data);
    } else {
      if (!extractor) extractor = training_extractor(cfg);
      const Stage upstream = s == Stage::completion ? Stage::edge : Stage::completion;
      const fs::path up = checkpoint_path(cfg.checkpoint_dir, upstream);
      r = s == Stage::completion
              ? train_completion_stage(cfg, data, up, extractor.get())
              : train_refinement_stage(cfg, data, up, extractor.get());
    }
    json entry = {{"stage", to_string(s)},
                  {"first_step", r.first_step},
                  {"final_step", r.final_step},
                  {"final_losses", r.log.empty() ? json() : r.log.back()}};
    if (r.checkpoint) {
      entry["checkpoint"] = r.checkpoint->filename().string();
      entry["sha256"] = file_sha256(*r.checkpoint);
    }
    std::cout << to_string(s) << ": steps " << r.first_step << " -> "
              << r.final_step << ", checkpoint "
              << (r.checkpoint ? r.checkpoint->string() : "-") << "\n";
    report["stages"].push_back(std::move(entry));
  }
  io::write_file(cfg.checkpoint_dir / kTrainReportFile,
                 [&] {
                   const std::string s = report.dump(2) + "\n";
                   return io::Bytes(s.begin(), s.end());
                 }());
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out = "eval";
  std::string baseline;
  bool hole_only = false;
  bool raw_output = false;
  bool random_extractors = false;
  bool no_preprocess = false;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() == a.baseline.empty()) {
    throw ConfigError("give exactly one of --checkpoint or --baseline");
  }
  const DatasetManifest manifest = DatasetManifest::load(a.manifest, Split::test);
  std::vector<ImageTensor> images;
  std::vector<Mask> masks;
  std::size_t with_masks = 0;
  for (const auto& e : manifest.entries) {
    ImageTensor img = load_tir_image(e.image);
    if (!a.no_preprocess) img = test_preprocess(img);
    if (e.mask) {
      masks.push_back(load_mask(*e.mask, img.height(), img.width()));
      ++with_masks;
    }
    images.push_back(std::move(img));
  }
  if (with_masks != 0 && with_masks != images.size()) {
    throw ConfigError("either every manifest entry names a mask or none does");
  }

  InpaintFn model;
  std::shared_ptr<const Inpainter> inpainter;
  if (!a.checkpoint.empty()) {
    inpainter = std::make_shared<Inpainter>(
        std::shared_ptr<const nn::ModelBundle>(load_bundle(fs::path(a.checkpoint))));
    model = [inpainter](const EvalSample& s) {
      return inpainter->run(s.masked_input, s.mask).result;
    };
  } else if (a.baseline == "identity") {
    model = [](const EvalSample& s) { return s.ground_truth; };
  } else if (a.baseline == "masked-input") {
    model = [](const EvalSample& s) { return s.masked_input; };
  } else {
    throw ConfigError("unknown baseline '" + a.baseline +
                      "' (identity or masked-input)");
  }

  std::optional<LpipsModel> lpips = LpipsModel::from_environment();
  if (!lpips && a.random_extractors) lpips = LpipsModel::random();
  if (!lpips) {
    std::cerr << "warning: LPIPS weights not found under " << kWeightsDirEnv
              << "; LPIPS reported as unavailable\n";
  }
  const RandomConvFidExtractor fid_extractor;
  MetricModels models{lpips ? &*lpips : nullptr, &fid_extractor};
  EvalOptions opts;
  opts.hole_only = a.hole_only;
  opts.raw_output = a.raw_output;
  opts.seed = a.seed;
  MetricsReport report =
      evaluate(images, with_masks ? &masks : nullptr, model, models, opts);
  fs::create_directories(a.out);
  report.write(fs::path(a.out) / "report.json", fs::path(a.out) / "report.txt");
  std::cout << report.to_table();
  return 0;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string image;
  std::string mask;
  std::string checkpoint;
  std::string out;
  bool debug = false;
  bool mask_white_is_hole = false;
};

// 16-bit single-channel inputs are written back at 16 bits so known pixels
// survive the round trip unchanged.
void write_like(const fs::path& path, const ImageTensor& image, int bit_depth) {
  if (bit_depth != 16) {
    io::write_png(path, image);
    return;
  }
  io::Raster r;
  r.height = image.height();
  r.width = image.width();
  r.channels = 1;
  r.bit_depth = 16;
  r.samples.resize(static_cast<std::size_t>(r.height) * r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      r.samples[static_cast<std::size_t>(y) * r.width + x] =
          static_cast<std::uint16_t>(std::lround(image.at(y, x) * 65535.0));
    }
  }
  io::write_raster(path, r);
}

int cmd_infer(const InferArgs& a) {
  const io::Raster raster = io::read_raster(a.image);
  const ImageTensor image = raster_to_image(raster);
  const Mask mask = load_mask(a.mask, image.height(), image.width(),
                              a.mask_white_is_hole ? MaskPolarity::white_is_hole
                                                   : MaskPolarity::white_is_valid);
  const Inpainter inpainter(
      std::shared_ptr<const nn::ModelBundle>(load_bundle(fs::path(a.checkpoint))));
  const InpaintResult r = inpainter.run(image, mask);
  if (r.padded) {
    std::cerr << "warning: " << image.height() << "x" << image.width()
              << " is not a multiple of 4; reflect-padded and cropped back\n";
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const int depth = raster.channels == 1 ? raster.bit_depth : 8;
  write_like(out, r.result, depth);
  if (a.debug) {
    const fs::path base = out.parent_path() / out.stem();
    io::write_png(base.string() + "_edge.png", r.edges);
    io::write_png(base.string() + "_coarse.png", r.coarse);
  }
  return 0;
}

// ---- edges ----------------------------------------------------------------

struct EdgesArgs {
  std::string image;
  std::string out;
  double low = kCannyLow;
  double high = kCannyHigh;
};

int cmd_edges(const EdgesArgs& a) {
  const ImageTensor image = load_tir_image(a.image);
  io::write_png(a.out, canny(image, a.low, a.high));
  return 0;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string checkpoint;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_payload = ServiceLimits{}.max_payload_bytes;
  std::int64_t max_pixels = ServiceLimits{}.max_pixels;
};

int cmd_serve(const ServeArgs& a) {
  ServiceLimits limits;
  limits.max_payload_bytes = a.max_payload;
  limits.max_pixels = a.max_pixels;
  InpaintService service(limits);
  if (!a.checkpoint.empty()) service.load_checkpoint(a.checkpoint);
  std::cerr << "listening on " << a.host << ":" << a.port
            << (service.loaded() ? "" : " (no model loaded)") << "\n";
  serve(service, a.host, a.port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal infrared image inpainting"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train one stage or all stages");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--preset", train.preset, "default or tiny")
      ->check(CLI::IsMember({"default", "tiny"}));
  t->add_option("--stage", train.stage, "edge, completion, refinement or all")
      ->check(CLI::IsMember({"edge", "completion", "refinement", "all"}));
  t->add_option("--steps", train.steps, "steps for each requested stage");
  t->add_option("--seed", train.seed, "random seed");
  t->add_flag("--no-eag", train.no_eag, "disable edge-aware modulation");
  t->add_flag("--resume", train.resume, "continue from existing checkpoints");
  for (const auto& key : config_keys()) {
    if (key.name == "seed" || key.name == "resume") continue;
    t->add_option("--" + key.name, train.overrides[key.name], key.help);
  }

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score a checkpoint per mask-ratio bucket");
  e->add_option("--manifest", eval.manifest, "test manifest")->required();
  e->add_option("--checkpoint", eval.checkpoint, "trained checkpoint");
  e->add_option("--baseline", eval.baseline, "identity or masked-input");
  e->add_option("--out", eval.out, "output directory for report.json/report.txt");
  e->add_option("--seed", eval.seed, "seed for generated masks");
  e->add_flag("--hole-only", eval.hole_only, "score hole pixels only");
  e->add_flag("--raw-output", eval.raw_output, "score output before recomposition");
  e->add_flag("--random-extractors", eval.random_extractors,
              "use a fixed-seed random LPIPS backbone when weights are absent");
  e->add_flag("--no-preprocess", eval.no_preprocess,
              "score at native resolution instead of the 256x256 test crop");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "inpaint one image");
  i->add_option("--image", infer.image)->required();
  i->add_option("--mask", infer.mask, "white = keep, black = fill")->required();
  i->add_option("--checkpoint", infer.checkpoint)->required();
  i->add_option("--out", infer.out)->required();
  i->add_flag("--debug", infer.debug, "also write <stem>_edge.png and <stem>_coarse.png");
  i->add_flag("--mask-white-is-hole", infer.mask_white_is_hole, "invert mask polarity");

  EdgesArgs edges;
  auto* g = app.add_subcommand("edges", "write the canny edge map of an image");
  g->add_option("--image", edges.image)->required();
  g->add_option("--out", edges.out)->required();
  g->add_option("--low", edges.low, "low threshold on the 8-bit scale");
  g->add_option("--high", edges.high, "high threshold on the 8-bit scale");

  ServeArgs srv;
  auto* s = app.add_subcommand("serve", "run the HTTP inference service");
  s->add_option("--checkpoint", srv.checkpoint);
  s->add_option("--host", srv.host);
  s->add_option("--port", srv.port);
  s->add_option("--max-payload", srv.max_payload, "bytes");
  s->add_option("--max-pixels", srv.max_pixels);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*i) return cmd_infer(infer);
    if (*g) return cmd_edges(edges);
    if (*s) return cmd_serve(srv);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
