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

#include "thermfill/service.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include "thermfill/checkpoint.hpp"
#include "thermfill/data_pipeline.hpp"
#include "thermfill/errors.hpp"
#include "thermfill/image_io.hpp"

namespace thermfill {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ValidationError("base64 length is not a multiple of 4");
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                       (c >= '0' && c <= '9') || c == '+' || c == '/';
    const bool pad = c == '=' && i + 2 >= text.size();
    if (!alnum && !pad) throw ValidationError("invalid base64 character");
  }
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ValidationError("invalid base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

namespace {

HttpReply error(int status, const std::string& message,
                const std::string& field = "") {
  json j = {{"error", message}};
  if (!field.empty()) j["field"] = field;
  return {status, j.dump()};
}

struct DecodedField {
  std::vector<std::uint8_t> bytes;
  int height = 0;
  int width = 0;
};

// Validates one base64 PNG field. Dimensions come from the PNG header so
// oversized images are rejected before pixel decoding.
std::optional<HttpReply> read_png_field(const json& body, const char* name,
                                        const ServiceLimits& limits,
                                        DecodedField& out) {
  if (!body.contains(name) || !body[name].is_string()) {
    return error(400, std::string(name) + " must be a base64 PNG string", name);
  }
  try {
    out.bytes = base64_decode(body[name].get_ref<const std::string&>());
  } catch (const ValidationError& e) {
    return error(400, std::string(name) + ": " + e.what(), name);
  }
  const auto dims = io::png_dimensions(out.bytes);
  if (!dims) return error(400, std::string(name) + " is not a PNG", name);
  out.width = dims->first;
  out.height = dims->second;
  if (static_cast<std::int64_t>(out.width) * out.height > limits.max_pixels) {
    return error(413,
                 std::string(name) + " has " + std::to_string(out.width) + "x" +
                     std::to_string(out.height) + " pixels, above the limit of " +
                     std::to_string(limits.max_pixels),
                 name);
  }
  return std::nullopt;
}

}  // namespace

InpaintService::InpaintService(ServiceLimits limits, InpaintOptions options)
    : limits_(limits), options_(options) {}

void InpaintService::load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::shared_ptr<const nn::ModelBundle> bundle =
      load_bundle(decode_checkpoint(bytes));
  set_model(std::move(bundle), sha256_hex(bytes));
}

void InpaintService::set_model(std::shared_ptr<const nn::ModelBundle> model,
                               std::string checkpoint_id) {
  auto m = std::make_shared<Model>();
  m->inpainter = std::make_shared<Inpainter>(std::move(model), options_);
  m->checkpoint_id = std::move(checkpoint_id);
  std::lock_guard<std::mutex> lock(mutex_);
  model_ = std::move(m);
}

std::shared_ptr<const InpaintService::Model> InpaintService::current() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return model_;
}

bool InpaintService::loaded() const { return current() != nullptr; }

HttpReply InpaintService::health() const {
  const auto m = current();
  if (!m) return {503, json{{"status", "unavailable"}}.dump()};
  const json j = {{"status", "ok"},
                  {"checkpoint_id", m->checkpoint_id},
                  {"model", m->inpainter->model().config.to_json()}};
  return {200, j.dump()};
}

HttpReply InpaintService::inpaint(const std::string& body) const {
  if (body.size() > limits_.max_payload_bytes) {
    return error(413, "payload exceeds " +
                          std::to_string(limits_.max_payload_bytes) + " bytes");
  }
  const auto m = current();
  if (!m) return error(503, "model not loaded");

  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "body is not valid JSON");
  }
  if (!req.is_object()) return error(400, "body must be a JSON object");
  bool debug = false;
  if (req.contains("options")) {
    const json& o = req["options"];
    if (!o.is_object()) return error(400, "options must be an object", "options");
    if (o.contains("return_debug")) {
      if (!o["return_debug"].is_boolean()) {
        return error(400, "return_debug must be a boolean", "options.return_debug");
      }
      debug = o["return_debug"].get<bool>();
    }
  }

  DecodedField image_field, mask_field;
  if (auto e = read_png_field(req, "image", limits_, image_field)) return *e;
  if (auto e = read_png_field(req, "mask", limits_, mask_field)) return *e;
  if (image_field.height != mask_field.height ||
      image_field.width != mask_field.width) {
    return error(400,
                 "mask is " + std::to_string(mask_field.width) + "x" +
                     std::to_string(mask_field.height) + " but image is " +
                     std::to_string(image_field.width) + "x" +
                     std::to_string(image_field.height),
                 "mask");
  }

  ImageTensor image;
  Mask mask;
  try {
    image = raster_to_image(io::decode_raster(image_field.bytes));
  } catch (const Error& e) {
    return error(400, std::string("image: ") + e.what(), "image");
  }
  try {
    mask = threshold_mask(raster_to_image(io::decode_raster(mask_field.bytes)));
  } catch (const Error& e) {
    return error(400, std::string("mask: ") + e.what(), "mask");
  }

  InpaintResult r;
  try {
    r = m->inpainter->run(image, mask);
  } catch (const ValidationError& e) {
    return error(400, e.what());
  } catch (const Error& e) {
    return error(500, e.what());
  }
  json out = {{"result", base64_encode(io::encode_png(r.result))},
              {"width", image.width()},
              {"height", image.height()},
              {"padded", r.padded},
              {"timings_ms",
               {{"edge", r.timings.edge_ms},
                {"completion", r.timings.completion_ms},
                {"refinement", r.timings.refinement_ms}}}};
  if (debug) {
    out["debug"] = {{"edge", base64_encode(io::encode_png(r.edges))},
                    {"coarse", base64_encode(io::encode_png(r.coarse))}};
  }
  return {200, out.dump()};
}

void InpaintService::mount(httplib::Server& server) const {
  server.set_payload_max_length(limits_.max_payload_bytes);
  server.Post("/v1/inpaint",
              [this](const httplib::Request& req, httplib::Response& res) {
                const HttpReply r = inpaint(req.body);
                res.status = r.status;
                res.set_content(r.body, "application/json");
              });
  server.Get("/v1/health",
             [this](const httplib::Request&, httplib::Response& res) {
               const HttpReply r = health();
               res.status = r.status;
               res.set_content(r.body, "application/json");
             });
}

void serve(const InpaintService& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port)) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace thermfill
