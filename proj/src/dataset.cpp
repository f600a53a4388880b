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

#include "invmark/dataset.hpp"

#include <algorithm>
#include <iostream>
#include <optional>
#include <random>

#include "invmark/image_io.hpp"

namespace invmark {

template <typename T>
Dataset<T> ingest_dataset(const std::filesystem::path& dir, const DatasetOptions& options) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (options.shuffle) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(files.begin(), files.end(), rng);
  }

  const auto count = static_cast<std::int64_t>(files.size());
  std::vector<std::optional<Tensor<T>>> decoded(files.size());
  std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      const auto image = resize(read_image(files[i], options.channels), options.height,
                                options.width);
      decoded[i] = to_tensor<T>(image);
    } catch (const DataError& e) {
      errors[i] = e.what();
    }
  }

  Dataset<T> out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (decoded[i]) {
      out.images.push_back(std::move(*decoded[i]));
      out.files.push_back(files[i]);
    } else {
      out.warnings.push_back("skipping " + files[i].string() + ": " + errors[i]);
      std::cerr << "warning: " << out.warnings.back() << "\n";
    }
  }
  if (out.images.empty()) throw DataError("no readable images in " + dir.string());
  return out;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> images, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  for (std::size_t i : indices) {
    if (i >= images.size()) {
      throw ConfigError("batch index " + std::to_string(i) + " out of range for " +
                        std::to_string(images.size()) + " images");
    }
  }
  const Shape& first = images[indices[0]].shape();
  const std::int64_t per = shape_numel(first);
  Tensor<T> out({static_cast<std::int64_t>(indices.size()), first[0], first[1], first[2]});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& img = images[indices[k]];
    require_same_shape(img.shape(), first, "stack_batch");
    std::copy(img.data(), img.data() + per, out.data() + static_cast<std::int64_t>(k) * per);
  }
  return out;
}

template Dataset<float> ingest_dataset<float>(const std::filesystem::path&, const DatasetOptions&);
template Dataset<double> ingest_dataset<double>(const std::filesystem::path&, const DatasetOptions&);
template Tensor<float> stack_batch<float>(std::span<const Tensor<float>>, std::span<const std::size_t>);
template Tensor<double> stack_batch<double>(std::span<const Tensor<double>>, std::span<const std::size_t>);

}  // namespace invmark
