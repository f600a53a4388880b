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

// Image-directory ingestion: every regular file that decodes as PNG or JPEG
// is resized to the configured resolution and normalized to [0,1]. Files
// that fail to decode are skipped with a warning.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "invmark/tensor.hpp"

namespace invmark {

struct DatasetOptions {
  std::int64_t height = 128;
  std::int64_t width = 128;
  std::int64_t channels = 3;
  std::uint64_t seed = 0;
  // Order files by name, then permute with `seed`.
  bool shuffle = true;
};

template <typename T>
struct Dataset {
  std::vector<Tensor<T>> images;  // CHW
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;

  std::size_t size() const { return images.size(); }
};

// Throws DataError when the directory is missing or yields no images.
template <typename T>
Dataset<T> ingest_dataset(const std::filesystem::path& dir, const DatasetOptions& options);

// Stacks CHW images (selected by index) into [N, C, H, W].
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> images, std::span<const std::size_t> indices);

}  // namespace invmark
