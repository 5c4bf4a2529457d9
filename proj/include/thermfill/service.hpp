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

// JSON-over-HTTP front end for the inpainting pipeline.
//
//   POST /v1/inpaint  {"image": b64 PNG, "mask": b64 PNG (white = keep),
//                      "options": {"return_debug": bool}}
//                  -> {"result": b64 PNG, "width", "height",
//                      "timings_ms": {...}, "debug": {"edge", "coarse"}}
//   GET  /v1/health -> {"status", "checkpoint_id", "model": {...}}

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "thermfill/pipeline.hpp"

namespace httplib {
class Server;
}

namespace thermfill {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ValidationError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct ServiceLimits {
  std::size_t max_payload_bytes = 16u << 20;
  std::int64_t max_pixels = 4096LL * 4096LL;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

class InpaintService {
 public:
  explicit InpaintService(ServiceLimits limits = {},
                          InpaintOptions options = {});

  // The checkpoint id is the SHA-256 of the archive bytes.
  void load_checkpoint(const std::filesystem::path& path);
  void set_model(std::shared_ptr<const nn::ModelBundle> model,
                 std::string checkpoint_id);
  bool loaded() const;

  HttpReply inpaint(const std::string& body) const;
  HttpReply health() const;

  // Registers both routes and the payload limit on `server`.
  void mount(httplib::Server& server) const;

  const ServiceLimits& limits() const { return limits_; }

 private:
  struct Model {
    std::shared_ptr<const Inpainter> inpainter;
    std::string checkpoint_id;
  };
  std::shared_ptr<const Model> current() const;

  ServiceLimits limits_;
  InpaintOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Model> model_;
};

// Blocks serving on host:port until the process is stopped.
void serve(const InpaintService& service, const std::string& host, int port);

}  // namespace thermfill
