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

#include "thermfill/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "thermfill/edge_ops.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/image_io.hpp"
#include "thermfill/layers.hpp"

namespace thermfill {

using nn::Var;

// ---- PSNR / SSIM --------------------------------------------------------------------

double mean_squared_error(const ImageTensor& pred, const ImageTensor& gt,
                          const Mask* hole_only) {
  require_same_size(pred, gt, "mse");
  if (hole_only != nullptr) require_same_size(pred, *hole_only, "mse");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (hole_only != nullptr && (*hole_only)[i] != 0) continue;
    const double d = pred[i] - gt[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) {
    throw ValidationError(hole_only ? "mask has no hole pixels" : "empty image");
  }
  return acc / static_cast<double>(n);
}

double psnr(const ImageTensor& pred, const ImageTensor& gt,
            const Mask* hole_only) {
  const double mse = mean_squared_error(pred, gt, hole_only);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::array<double, kSsimWindow> ssim_taps() {
  std::array<double, kSsimWindow> t{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    t[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += t[i];
  }
  for (double& v : t) v /= total;
  return t;
}

// Valid-mode separable Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto taps = ssim_taps();
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) {
        acc += taps[k] * src[static_cast<std::size_t>(y) * w + x + k];
      }
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) {
        acc += taps[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      }
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageTensor& pred, const ImageTensor& gt) {
  require_same_size(pred, gt, "ssim");
  const int h = pred.height();
  const int w = pred.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ValidationError("ssim needs images of at least 11x11");
  }
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const std::size_t n = pred.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pred[i];
    y[i] = gt[i];
    xx[i] = pred[i] * pred[i];
    yy[i] = gt[i] * gt[i];
    xy[i] = pred[i] * gt[i];
  }
  const auto mx = filter_valid(x, h, w);
  const auto my = filter_valid(y, h, w);
  const auto mxx = filter_valid(xx, h, w);
  const auto myy = filter_valid(yy, h, w);
  const auto mxy = filter_valid(xy, h, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
  }
  return acc / static_cast<double>(mx.size());
}

// ---- LPIPS ----------------------------------------------------------------------------

LpipsModel::LpipsModel(FeatureExtractor extractor,
                       std::vector<std::vector<double>> weights)
    : extractor_(std::move(extractor)), weights_(std::move(weights)) {
  if (weights_.size() != FeatureExtractor::kLpipsTaps.size()) {
    throw ConfigError("lpips needs one weight vector per tap");
  }
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const int c = extractor_.channels_at(FeatureExtractor::kLpipsTaps[k]);
    if (weights_[k].size() != static_cast<std::size_t>(c)) {
      throw ConfigError("lpips weights for tap " + std::to_string(k) +
                        " have the wrong channel count");
    }
  }
}

LpipsModel LpipsModel::random(const ExtractorOptions& options) {
  FeatureExtractor fx = FeatureExtractor::random(options);
  std::vector<std::vector<double>> w;
  for (int tap : FeatureExtractor::kLpipsTaps) {
    const int c = fx.channels_at(tap);
    w.emplace_back(c, 1.0 / c);
  }
  return LpipsModel(std::move(fx), std::move(w));
}

std::optional<LpipsModel> LpipsModel::from_environment() {
  const char* dir = std::getenv(kWeightsDirEnv);
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  const std::filesystem::path lin = std::filesystem::path(dir) / kLpipsWeightsFile;
  auto fx = FeatureExtractor::from_environment();
  if (!fx || !std::filesystem::exists(lin)) return std::nullopt;
  const Checkpoint ckpt = read_checkpoint(lin);
  std::vector<std::vector<double>> w;
  for (std::size_t k = 0; k < FeatureExtractor::kLpipsTaps.size(); ++k) {
    const nn::Tensor* t = ckpt.find("lin." + std::to_string(k) + ".weight");
    if (t == nullptr) throw ConfigError("lpips weights missing lin." + std::to_string(k));
    w.emplace_back(t->values().begin(), t->values().end());
  }
  return LpipsModel(std::move(*fx), std::move(w));
}

double LpipsModel::distance(const ImageTensor& a, const ImageTensor& b) const {
  require_same_size(a, b, "lpips");
  nn::NoGradGuard guard;
  const std::span<const int> taps(FeatureExtractor::kLpipsTaps);
  const ImageTensor both[] = {a, b};
  const auto fa = extractor_.features(Var(stack(std::span(both, 1))), taps);
  const auto fb = extractor_.features(Var(stack(std::span(both + 1, 1))), taps);
  double total = 0.0;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const nn::Tensor& ta = fa[k].value();
    const nn::Tensor& tb = fb[k].value();
    const nn::Shape s = ta.shape();
    const std::size_t plane = s.plane();
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      double na = 0.0, nb = 0.0;
      for (int c = 0; c < s.c; ++c) {
        na += ta.plane(0, c)[p] * ta.plane(0, c)[p];
        nb += tb.plane(0, c)[p] * tb.plane(0, c)[p];
      }
      na = std::sqrt(na) + 1e-10;
      nb = std::sqrt(nb) + 1e-10;
      for (int c = 0; c < s.c; ++c) {
        const double d = ta.plane(0, c)[p] / na - tb.plane(0, c)[p] / nb;
        acc += weights_[k][c] * d * d;
      }
    }
    total += acc / static_cast<double>(plane);
  }
  return total;
}

// ---- FID ------------------------------------------------------------------------------

FeatureStats feature_stats(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 2) {
    throw ValidationError("feature statistics need at least two samples");
  }
  const Eigen::Index d = features.front().size();
  FeatureStats s{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (const auto& f : features) {
    if (f.size() != d) throw ValidationError("feature dimensions differ");
    s.mean += f;
  }
  s.mean /= static_cast<double>(features.size());
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - s.mean;
    s.cov.noalias() += c * c.transpose();
  }
  s.cov /= static_cast<double>(features.size() - 1);
  return s;
}

namespace {

// Eigenvalues of a symmetric matrix with the negative-part policy applied.
Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& raw,
                                    const char* what, FidDiagnostics* diag) {
  const double top = std::max(1.0, raw.cwiseAbs().maxCoeff());
  Eigen::VectorXd out = raw;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (raw[i] >= 0.0) continue;
    const double mag = -raw[i];
    if (diag) {
      diag->most_negative_eigenvalue =
          std::min(diag->most_negative_eigenvalue, raw[i]);
    }
    if (mag > 1e-3 * top) {
      throw NumericalError(std::string(what) +
                           " is not positive semi-definite: eigenvalue " +
                           std::to_string(raw[i]));
    }
    if (mag > 1e-6 * top && diag) {
      diag->warnings.push_back(std::string(what) +
                               ": clamped negative eigenvalue " +
                               std::to_string(raw[i]));
    }
    out[i] = 0.0;
  }
  return out;
}

}  // namespace

double fid(const FeatureStats& a, const FeatureStats& b,
           FidDiagnostics* diagnostics) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d ||
      b.cov.rows() != d || b.cov.cols() != d) {
    throw ValidationError("fid statistics have mismatched dimensions");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.cov);
  const Eigen::VectorXd la =
      checked_eigenvalues(ea.eigenvalues(), "first covariance", diagnostics);
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() *
                                 la.cwiseSqrt().asDiagonal() *
                                 ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner,
                                                    Eigen::EigenvaluesOnly);
  const Eigen::VectorXd li =
      checked_eigenvalues(ei.eigenvalues(), "covariance product", diagnostics);
  const double trace_sqrt = li.cwiseSqrt().sum();
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
  // Rounding can push an exact zero slightly negative.
  return std::max(0.0, value);
}

RandomConvFidExtractor::RandomConvFidExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const int widths[] = {1, 16, 32, 64};
  for (int i = 0; i < 3; ++i) {
    weights_.emplace_back(nn::he_normal({widths[i + 1], widths[i], 3, 3},
                                        widths[i] * 9, rng));
    biases_.emplace_back(nn::Tensor({1, widths[i + 1], 1, 1}));
  }
}

Eigen::VectorXd RandomConvFidExtractor::embed(const ImageTensor& image) const {
  nn::NoGradGuard guard;
  Var x = nn::affine(Var(stack(std::span(&image, 1))), 2.0, -1.0);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = nn::relu(nn::conv2d(x, weights_[i], biases_[i], {2, 1, 1}));
  }
  const nn::Tensor& t = x.value();
  Eigen::VectorXd out(t.shape().c);
  for (int c = 0; c < t.shape().c; ++c) {
    double acc = 0.0;
    const double* p = t.plane(0, c);
    for (std::size_t j = 0; j < t.shape().plane(); ++j) acc += p[j];
    out[c] = acc / static_cast<double>(t.shape().plane());
  }
  return out;
}

// ---- report ---------------------------------------------------------------------------

std::size_t MetricsReport::row_count() const {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.has_value();
  return n;
}

namespace {

nlohmann::json metrics_json(const BucketMetrics& m) {
  nlohmann::json j = {{"count", m.count}, {"psnr", m.psnr}, {"ssim", m.ssim}};
  j["lpips"] = m.lpips ? nlohmann::json(*m.lpips) : nlohmann::json(nullptr);
  j["fid"] = m.fid ? nlohmann::json(*m.fid) : nlohmann::json(nullptr);
  return j;
}

std::string cell(const std::optional<double>& v, int precision) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
  return buf;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < kBucketCount; ++i) {
    if (!buckets[i]) continue;
    nlohmann::json r = metrics_json(*buckets[i]);
    r["bucket"] = mask_buckets()[i].label();
    rows.push_back(std::move(r));
  }
  nlohmann::json j;
  j["rows"] = std::move(rows);
  j["average"] = average ? metrics_json(*average) : nlohmann::json(nullptr);
  j["unbucketed"] = unbucketed;
  j["hole_only"] = hole_only;
  j["raw_output"] = raw_output;
  j["lpips_backbone"] =
      lpips_backbone.empty() ? nlohmann::json(nullptr) : nlohmann::json(lpips_backbone);
  j["fid_extractor"] = fid_extractor;
  j["warnings"] = warnings;
  return j;
}

std::string MetricsReport::to_table() const {
  std::vector<std::string> header{"Mask Ratio"};
  for (const auto& b : mask_buckets()) header.push_back(b.label());
  header.push_back("Average");

  struct Row {
    const char* name;
    int precision;
    std::optional<double> (*get)(const BucketMetrics&);
  };
  const Row rows[] = {
      {"PSNR", 2, [](const BucketMetrics& m) -> std::optional<double> { return m.psnr; }},
      {"SSIM", 4, [](const BucketMetrics& m) -> std::optional<double> { return m.ssim; }},
      {"LPIPS", 4, [](const BucketMetrics& m) { return m.lpips; }},
      {"FID", 2, [](const BucketMetrics& m) { return m.fid; }},
  };
  std::vector<std::vector<std::string>> cells{header};
  for (const Row& r : rows) {
    std::vector<std::string> line{r.name};
    for (const auto& b : buckets) {
      line.push_back(b ? cell(r.get(*b), r.precision) : "-");
    }
    line.push_back(average ? cell(r.get(*average), r.precision) : "-");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      width[c] = std::max(width[c], line[c].size());
    }
  }
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) os << " | ";
      os << line[c] << std::string(width[c] - line[c].size(), ' ');
    }
    os << '\n';
  }
  return os.str();
}

void MetricsReport::write(const std::filesystem::path& json_path,
                          const std::filesystem::path& table_path) const {
  const std::string j = to_json().dump(2) + "\n";
  const std::string t = to_table();
  io::write_file(json_path, std::vector<std::uint8_t>(j.begin(), j.end()));
  io::write_file(table_path, std::vector<std::uint8_t>(t.begin(), t.end()));
}

// ---- evaluate -------------------------------------------------------------------------

namespace {

struct BucketAccumulator {
  std::size_t count = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  std::vector<Eigen::VectorXd> real;
  std::vector<Eigen::VectorXd> fake;
};

}  // namespace

MetricsReport evaluate(const std::vector<ImageTensor>& images,
                       const std::vector<Mask>* masks, const InpaintFn& model,
                       const MetricModels& models, const EvalOptions& options) {
  if (masks != nullptr && masks->size() != images.size()) {
    throw ValidationError("evaluate: image and mask counts differ");
  }
  MetricsReport report;
  report.hole_only = options.hole_only;
  report.raw_output = options.raw_output;
  if (models.lpips) {
    report.lpips_backbone =
        models.lpips->calibrated() ? "vgg19-pretrained" : "vgg19-random";
  }
  report.fid_extractor = models.fid ? models.fid->name() : "";
  std::array<BucketAccumulator, kBucketCount> acc;

  auto score = [&](std::size_t sample, const ImageTensor& gt, const Mask& mask,
                   std::size_t bucket) {
    const ImageTensor masked = apply_mask(gt, mask);
    const ImageTensor raw = model(EvalSample{sample, gt, masked, mask});
    require_same_size(raw, gt, "evaluate: model output");
    const ImageTensor out =
        options.raw_output ? raw : recompose(masked, raw, mask);
    BucketAccumulator& a = acc[bucket];
    ++a.count;
    a.psnr += psnr(out, gt, options.hole_only ? &mask : nullptr);
    a.ssim += ssim(out, gt);
    if (models.lpips) a.lpips += models.lpips->distance(out, gt);
    if (models.fid) {
      a.real.push_back(models.fid->embed(gt));
      a.fake.push_back(models.fid->embed(out));
    }
  };

  std::size_t sample = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (masks != nullptr) {
      const auto b = bucket_index(mask_ratio((*masks)[i]));
      if (!b) {
        ++report.unbucketed;
        continue;
      }
      score(sample++, images[i], (*masks)[i], *b);
    } else {
      for (std::size_t b = 0; b < kBucketCount; ++b) {
        Rng rng = Rng::derive(options.seed, i * kBucketCount + b);
        const Mask m = generate_stroke_mask(rng, mask_buckets()[b],
                                            images[i].height(), images[i].width());
        score(sample++, images[i], m, b);
      }
    }
  }

  BucketMetrics mean;
  std::size_t filled = 0;
  std::size_t with_fid = 0;
  for (std::size_t b = 0; b < kBucketCount; ++b) {
    const BucketAccumulator& a = acc[b];
    if (a.count == 0) continue;
    BucketMetrics m;
    const double n = static_cast<double>(a.count);
    m.count = a.count;
    m.psnr = a.psnr / n;
    m.ssim = a.ssim / n;
    if (models.lpips) m.lpips = a.lpips / n;
    if (models.fid && a.count >= 2) {
      FidDiagnostics diag;
      m.fid = fid(feature_stats(a.real), feature_stats(a.fake), &diag);
      for (auto& w : diag.warnings) {
        report.warnings.push_back(mask_buckets()[b].label() + ": " + w);
      }
    }
    report.buckets[b] = m;
    ++filled;
    mean.count += m.count;
    mean.psnr += m.psnr;
    mean.ssim += m.ssim;
    if (m.lpips) mean.lpips = mean.lpips.value_or(0.0) + *m.lpips;
    if (m.fid) {
      mean.fid = mean.fid.value_or(0.0) + *m.fid;
      ++with_fid;
    }
  }
  if (filled > 0) {
    mean.psnr /= static_cast<double>(filled);
    mean.ssim /= static_cast<double>(filled);
    if (mean.lpips) *mean.lpips /= static_cast<double>(filled);
    if (mean.fid) *mean.fid /= static_cast<double>(with_fid);
    report.average = mean;
  }
  return report;
}

}  // namespace thermfill
