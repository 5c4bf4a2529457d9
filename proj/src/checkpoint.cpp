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

#include "thermfill/checkpoint.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "thermfill/errors.hpp"
#include "thermfill/image_io.hpp"

namespace thermfill {

namespace {

using Bytes = std::vector<std::uint8_t>;

template <class T>
void put(Bytes& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw IoError("checkpoint is truncated");
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Precision parse_dtype(const nlohmann::json& header) {
  const std::string d = header.value("dtype", "");
  if (d == "f32") return Precision::f32;
  if (d == "f64") return Precision::f64;
  throw IoError("checkpoint has unknown dtype '" + d + "'");
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void Checkpoint::add(std::string name, nn::Tensor value) {
  tensors.push_back({std::move(name), std::move(value)});
}

Bytes encode_checkpoint(const Checkpoint& ckpt, Precision precision) {
  nlohmann::json header = ckpt.header;
  header["dtype"] = precision == Precision::f32 ? "f32" : "f64";
  header["tensor_count"] = ckpt.tensors.size();
  const std::string text = header.dump();

  Bytes out;
  out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
  out.push_back('\n');
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    const nn::Shape& s = t.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, d);
    for (double v : t.value.values()) {
      if (precision == Precision::f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(kCheckpointMagic.size() + 1);
  if (std::memcmp(magic, kCheckpointMagic.data(), kCheckpointMagic.size()) !=
          0 ||
      magic[kCheckpointMagic.size()] != '\n') {
    throw IoError("not a TIRFILL-CKPT-1 archive");
  }
  const auto header_len = r.get<std::uint64_t>();
  const auto* text = reinterpret_cast<const char*>(r.take(header_len));
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(text, text + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  const Precision precision = parse_dtype(ckpt.header);
  const std::size_t count = ckpt.header.value("tensor_count", std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto* name = reinterpret_cast<const char*>(r.take(name_len));
    nn::Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw IoError("checkpoint tensor has a negative extent");
    }
    nn::Tensor t(s);
    for (double& v : t.values()) {
      v = precision == Precision::f32 ? static_cast<double>(r.get<float>())
                                      : r.get<double>();
    }
    ckpt.add(std::string(name, name_len), std::move(t));
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path,
                      const Checkpoint& ckpt, Precision precision) {
  const Bytes bytes = encode_checkpoint(ckpt, precision);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  io::write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = io::read_file(path);
  return decode_checkpoint(bytes);
}

void store_bundle(Checkpoint& ckpt, const nn::ModelBundle& bundle) {
  ckpt.header["network"] = bundle.config.to_json();
  for (const auto& [prefix, ps] : bundle.parameter_sets()) {
    for (const auto& p : ps->entries()) {
      ckpt.add(prefix + "." + p.name, p.var.value());
    }
  }
}

void restore_bundle(const Checkpoint& ckpt, nn::ModelBundle& bundle,
                    const std::vector<std::string>& prefixes) {
  for (const auto& [prefix, ps] : bundle.parameter_sets()) {
    if (!prefixes.empty() &&
        std::find(prefixes.begin(), prefixes.end(), prefix) == prefixes.end()) {
      continue;
    }
    for (auto& p : ps->entries()) {
      const std::string name = prefix + "." + p.name;
      const nn::Tensor* t = ckpt.find(name);
      if (t == nullptr) throw IoError("checkpoint lacks tensor " + name);
      if (t->shape() != p.var.shape()) {
        throw IoError("checkpoint tensor " + name + " has shape " +
                      nn::to_string(t->shape()) + ", expected " +
                      nn::to_string(p.var.shape()));
      }
      p.var.mutable_value() = *t;
    }
  }
}

std::unique_ptr<nn::ModelBundle> load_bundle(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("network")) {
    throw IoError("checkpoint header has no network config");
  }
  auto bundle = std::make_unique<nn::ModelBundle>(
      nn::NetworkConfig::from_json(ckpt.header["network"]));
  restore_bundle(ckpt, *bundle);
  return bundle;
}

std::unique_ptr<nn::ModelBundle> load_bundle(
    const std::filesystem::path& path) {
  return load_bundle(read_checkpoint(path));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  std::ostringstream os;
  for (unsigned char c : digest) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  }
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  return sha256_hex(io::read_file(path));
}

}  // namespace thermfill
