// Copyright 2026 The invmark Authors
// SPDX-License-Identifier: Apache-2.0
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

#include "invmark/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace invmark {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'I', 'N', 'V', 'M', 'A', 'R', 'K', '\0'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename V>
  V get() {
    V v;
    get_bytes(&v, sizeof(V));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (n > end_ - pos_) throw DataError("checkpoint is truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_tensors(Writer& w, const NamedTensors<T>& tensors) {
  w.put<std::uint64_t>(tensors.size());
  for (const auto& [name, t] : tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::int64_t>(d);
    w.put_bytes(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(T));
  }
}

template <typename T>
NamedTensors<T> read_tensors(Reader& r) {
  const auto count = r.get<std::uint64_t>();
  if (count > (1u << 24)) throw DataError("checkpoint tensor count is implausible");
  NamedTensors<T> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (len > 4096) throw DataError("checkpoint tensor name is implausible");
    std::string name(len, '\0');
    r.get_bytes(name.data(), len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError("checkpoint tensor rank is implausible");
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.get<std::int64_t>();
      if (d < 0 || d > (std::int64_t{1} << 32)) throw DataError("checkpoint tensor dim is invalid");
    }
    Tensor<T> t(shape);
    r.get_bytes(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(T));
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Header {
  std::uint32_t version;
  std::uint32_t scalar_size;
};

Header check_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not an invmark checkpoint (bad magic)");
  }
  Header h;
  std::memcpy(&h.version, bytes.data() + 8, 4);
  std::memcpy(&h.scalar_size, bytes.data() + 12, 4);
  if (h.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(h.version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (h.scalar_size != 4 && h.scalar_size != 8) {
    throw DataError("checkpoint has invalid scalar size " + std::to_string(h.scalar_size));
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a(bytes.data(), bytes.size() - 8)) {
    throw DataError("checkpoint checksum mismatch (file corrupt or modified)");
  }
  return h;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const CheckpointData<T>& data) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(sizeof(T));
  const std::string meta = data.meta.dump();
  w.put<std::uint64_t>(meta.size());
  w.put_bytes(meta.data(), meta.size());
  write_tensors(w, data.parameters);
  write_tensors(w, data.optimizer);
  w.put<std::uint64_t>(fnv1a(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

template <typename T>
CheckpointData<T> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const Header h = check_header(bytes);
  if (h.scalar_size != sizeof(T)) {
    throw ConfigError("checkpoint stores " + std::to_string(8 * h.scalar_size) +
                      "-bit parameters, expected " + std::to_string(8 * sizeof(T)));
  }
  Reader r(bytes, bytes.size() - 8);
  std::uint8_t skip[16];
  r.get_bytes(skip, 16);
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > bytes.size()) throw DataError("checkpoint metadata length is invalid");
  std::string meta(meta_len, '\0');
  r.get_bytes(meta.data(), meta_len);
  CheckpointData<T> out;
  try {
    out.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  out.parameters = read_tensors<T>(r);
  out.optimizer = read_tensors<T>(r);
  if (r.position() != bytes.size() - 8) throw DataError("checkpoint has trailing bytes");
  return out;
}

std::uint32_t checkpoint_scalar_size(const std::filesystem::path& path) {
  return check_header(read_file(path)).scalar_size;
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (check_header(bytes).scalar_size == 4) return deserialize_checkpoint<float>(bytes).meta;
  return deserialize_checkpoint<double>(bytes).meta;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, WatermarkModel<T>& model,
                     const nlohmann::json& extra_meta, const NamedTensors<T>& optimizer) {
  CheckpointData<T> data;
  data.meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  data.meta["model"] = to_json(model.config());
  model.visit([&](const std::string& name, ag::Var<T>& p) {
    data.parameters.emplace_back(name, p.value());
  });
  data.optimizer = optimizer;
  const auto bytes = serialize_checkpoint(data);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
CheckpointData<T> load_checkpoint(const std::filesystem::path& path, WatermarkModel<T>& model) {
  auto data = deserialize_checkpoint<T>(read_file(path));
  if (!data.meta.contains("model")) throw DataError("checkpoint has no model config");
  const ModelConfig stored = model_config_from_json(data.meta.at("model"));
  if (!(stored == model.config())) {
    throw ConfigError("checkpoint config " + to_json(stored).dump() +
                      " does not match the requested config " + to_json(model.config()).dump());
  }
  std::size_t index = 0;
  model.visit([&](const std::string& name, ag::Var<T>& p) {
    if (index >= data.parameters.size()) throw DataError("checkpoint is missing " + name);
    auto& [stored_name, tensor] = data.parameters[index++];
    if (stored_name != name || tensor.shape() != p.shape()) {
      throw DataError("checkpoint parameter " + stored_name + " " + shape_string(tensor.shape()) +
                      " does not match " + name + " " + shape_string(p.shape()));
    }
    p.mutable_value() = std::move(tensor);
  });
  if (index != data.parameters.size()) throw DataError("checkpoint has extra parameters");
  data.parameters.clear();
  return data;
}

template <typename T>
WatermarkModel<T> load_model(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (!meta.contains("model")) throw DataError("checkpoint has no model config");
  WatermarkModel<T> model(model_config_from_json(meta.at("model")), 0);
  load_checkpoint(path, model);
  return model;
}

template <typename T>
std::vector<std::uint8_t> parameter_bytes(WatermarkModel<T>& model) {
  std::vector<std::uint8_t> out;
  model.visit([&](const std::string&, ag::Var<T>& p) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(p.value().data());
    out.insert(out.end(), b, b + p.value().numel() * sizeof(T));
  });
  return out;
}

#define INVMARK_INSTANTIATE_CHECKPOINT(T)                                                   \
  template std::vector<std::uint8_t> serialize_checkpoint<T>(const CheckpointData<T>&);     \
  template CheckpointData<T> deserialize_checkpoint<T>(const std::vector<std::uint8_t>&);   \
  template void save_checkpoint<T>(const std::filesystem::path&, WatermarkModel<T>&,        \
                                   const nlohmann::json&, const NamedTensors<T>&);          \
  template CheckpointData<T> load_checkpoint<T>(const std::filesystem::path&,               \
                                                WatermarkModel<T>&);                        \
  template WatermarkModel<T> load_model<T>(const std::filesystem::path&);                   \
  template std::vector<std::uint8_t> parameter_bytes<T>(WatermarkModel<T>&);

INVMARK_INSTANTIATE_CHECKPOINT(float)
INVMARK_INSTANTIATE_CHECKPOINT(double)

}  // namespace invmark
