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

// 8-bit image files and conversion to/from real-valued CHW tensors.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "invmark/tensor.hpp"

namespace invmark {

// Interleaved (HWC) 8-bit pixels; channels is 1 (gray) or 3 (RGB).
struct Image8 {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

// Decodes PNG or JPEG (sniffed from the file signature). Gray+alpha and RGBA
// are reduced to gray/RGB. Throws DataError on unreadable or corrupt input.
Image8 read_image(const std::filesystem::path& path);
// Gray-scale source files are expanded to `channels` (1 or 3) on request.
Image8 read_image(const std::filesystem::path& path, std::int64_t channels);

void write_png(const std::filesystem::path& path, const Image8& image);
void write_jpeg(const std::filesystem::path& path, const Image8& image, int quality);

// Baseline JPEG in memory (libjpeg, default 4:2:0 chroma for RGB).
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality);
Image8 decode_jpeg(std::span<const std::uint8_t> bytes);

// Bilinear resampling with half-pixel centers; box-filters first when
// shrinking by more than 2x.
Image8 resize(const Image8& image, std::int64_t height, std::int64_t width);

Image8 to_channels(const Image8& image, std::int64_t channels);

// CHW in [0,1].
template <typename T>
Tensor<T> to_tensor(const Image8& image);

// pixel = round(clamp(v, 0, 1) * 255). Accepts CHW or 1xCxHxW.
template <typename T>
Image8 to_image8(const Tensor<T>& chw);

// round(clamp(v,0,1)*255)/255 elementwise.
template <typename T>
Tensor<T> quantize8(const Tensor<T>& t);

}  // namespace invmark
