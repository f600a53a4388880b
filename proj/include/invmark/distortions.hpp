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

// The noise layer: attacks applied to encoded images between embedding and
// extraction.
//
// All attacks take the cover image as well as the encoded image, because
// Dropout and Cropout substitute cover pixels. Images are [N,C,H,W] in [0,1];
// every random draw is derived from the caller's seed, one sample after the
// other, so a (spec, images, seed) triple always yields the same output.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invmark/autograd.hpp"
#include "invmark/tensor.hpp"

namespace invmark {

enum class DistortionKind { kIdentity, kDropout, kCropout, kCrop, kGaussianFilter, kJpeg };

struct DistortionSpec {
  DistortionKind kind = DistortionKind::kIdentity;
  // Dropout/Cropout/Crop: ratio p in [0,1]; GaussianFilter: sigma > 0;
  // Jpeg: quality in [1,100]; unused for Identity.
  double param = 0.0;

  static DistortionSpec identity() { return {}; }
  static DistortionSpec dropout(double p) { return {DistortionKind::kDropout, p}; }
  static DistortionSpec cropout(double p) { return {DistortionKind::kCropout, p}; }
  static DistortionSpec crop(double p) { return {DistortionKind::kCrop, p}; }
  static DistortionSpec gaussian_filter(double sigma) {
    return {DistortionKind::kGaussianFilter, sigma};
  }
  static DistortionSpec jpeg(double quality) { return {DistortionKind::kJpeg, quality}; }

  // Parses `identity`, `dropout:0.3`, `cropout:0.3`, `crop:0.035`, `gf:2.0`,
  // `jpeg:50`. Throws ConfigError on unknown kinds or out-of-range values.
  static DistortionSpec parse(std::string_view text);

  bool differentiable() const { return kind != DistortionKind::kJpeg; }
  bool needs_cover() const {
    return kind == DistortionKind::kDropout || kind == DistortionKind::kCropout;
  }
  std::string to_string() const;
  void validate() const;

  friend bool operator==(const DistortionSpec&, const DistortionSpec&) = default;
};

// Comma-separated list; throws ConfigError on an empty list.
std::vector<DistortionSpec> parse_distortion_pool(std::string_view text);
std::string format_distortion_pool(std::span<const DistortionSpec> pool);

// The six-attack pool used for combined training.
std::vector<DistortionSpec> combined_pool();

// Value used outside the kept region by Crop.
inline constexpr double kCropPadValue = 127.0 / 255.0;

// Side of the square kept by Crop(p): floor(sqrt(p*H*W)).
std::int64_t crop_side(double p, std::int64_t height, std::int64_t width);

struct Extent {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

// Rectangle kept by Cropout(p) for the given aspect ratio (rows / cols).
Extent cropout_extent(double p, std::int64_t height, std::int64_t width, double aspect);

// Normalized 1-D Gaussian taps of length 2*ceil(2*sigma)+1.
template <typename T>
std::vector<T> gaussian_taps(double sigma);

// Non-differentiable value of an attack.
template <typename T>
Tensor<T> apply_distortion(const DistortionSpec& spec, const Tensor<T>& cover,
                           const Tensor<T>& encoded, std::uint64_t seed);

// Differentiable attack on the graph. Throws ConfigError for Jpeg.
template <typename T>
ag::Var<T> apply_distortion(const DistortionSpec& spec, const Tensor<T>& cover,
                            const ag::Var<T>& encoded, std::uint64_t seed);

// Forward attack simulation: the value of the attack with the gradient of
// the identity, i.e. encoded + stop_gradient(attack(encoded) - encoded).
template <typename T>
ag::Var<T> forward_asl(const DistortionSpec& spec, const Tensor<T>& cover,
                       const ag::Var<T>& encoded, std::uint64_t seed);

// Routes differentiable attacks through apply_distortion and the others
// through forward_asl.
template <typename T>
ag::Var<T> noise_layer(const DistortionSpec& spec, const Tensor<T>& cover,
                       const ag::Var<T>& encoded, std::uint64_t seed);

// Uniform draw of one pool entry. Throws ConfigError on an empty pool.
const DistortionSpec& sample_combined(std::span<const DistortionSpec> pool,
                                      std::mt19937_64& rng);

}  // namespace invmark
