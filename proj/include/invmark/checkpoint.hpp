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

#pragma once

// Versioned binary checkpoint:
//
//   "INVMARK\0"                         8-byte magic
//   u32 format version                  kCheckpointVersion
//   u32 scalar size                     4 (float32) or 8 (float64)
//   u64 n, n bytes                      JSON metadata ({"model": ..., "train": ..., "step": ...})
//   u64 count, count tensors            model parameters
//   u64 count, count tensors            optimizer state (may be empty)
//   u64                                 FNV-1a 64 of every preceding byte
//
// A tensor is u32 name length, name, u32 rank, rank x i64 dims, raw
// little-endian scalars. Loading verifies magic, version, scalar size,
// checksum, config equality and every parameter name and shape.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "invmark/model.hpp"
#include "json.hpp"

namespace invmark {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
struct CheckpointData {
  nlohmann::json meta;
  NamedTensors<T> parameters;
  NamedTensors<T> optimizer;
};

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const CheckpointData<T>& data);
template <typename T>
CheckpointData<T> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Scalar size recorded in a checkpoint file (4 or 8); validates the header.
std::uint32_t checkpoint_scalar_size(const std::filesystem::path& path);
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, WatermarkModel<T>& model,
                     const nlohmann::json& extra_meta = nlohmann::json::object(),
                     const NamedTensors<T>& optimizer = {});

// Fills `model` from the file. Throws DataError on corruption and
// ConfigError when the stored model config differs from model.config().
// Returns the metadata and optimizer state.
template <typename T>
CheckpointData<T> load_checkpoint(const std::filesystem::path& path, WatermarkModel<T>& model);

// Builds a model from the config stored in the checkpoint.
template <typename T>
WatermarkModel<T> load_model(const std::filesystem::path& path);

// Raw bytes of every parameter, in visit order.
template <typename T>
std::vector<std::uint8_t> parameter_bytes(WatermarkModel<T>& model);

}  // namespace invmark
