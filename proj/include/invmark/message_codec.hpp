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

// Learned message processor (bits -> watermark feature map) and its mirror,
// the inverse message processor (feature map -> soft bits).

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invmark/config.hpp"
#include "invmark/layers.hpp"

namespace invmark {

struct SecretMessage {
  std::vector<std::uint8_t> bits;  // each 0 or 1

  std::size_t size() const { return bits.size(); }
  std::string to_bit_string() const;

  // Uniform i.i.d. bits.
  static SecretMessage random(std::int64_t length, std::mt19937_64& rng);

  friend bool operator==(const SecretMessage&, const SecretMessage&) = default;
};

// Accepts a bit string ("0110...") of exactly `length` characters or hex
// with a 0x prefix carrying ceil(length/4) digits whose surplus leading bits
// are zero. Throws ConfigError otherwise.
SecretMessage parse_message(std::string_view text, std::int64_t length);

struct SoftMessage {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// bit = 1 iff value >= 0.5.
SecretMessage harden(const SoftMessage& soft);

// Spatial bookkeeping of the processors: a dense layer maps L bits to
// L' = rows * cols values, reshaped to [1, rows, cols] and doubled
// `upsample_stages` times to reach the sub-band grid
// [feature_channels, H/2, W/2].
struct ProcessorGeometry {
  std::int64_t message_length = 0;
  std::int64_t expanded_length = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t upsample_stages = 0;
  std::int64_t feature_channels = 0;
  std::int64_t feature_height = 0;
  std::int64_t feature_width = 0;
};

// With upsample_stages < 0 picks the largest stage count whose L' is at
// least 4L (falling back to 0 stages). Throws ConfigError when the grid
// cannot be reached by doubling or L' < L.
ProcessorGeometry resolve_geometry(const ModelConfig& config);

// L' = (H / 2^(n-1)) * (W / 2^(n-1)) for n resampling layers as counted in
// the original layer formula; kept to document the relation to the stage
// count used here (n = upsample_stages + 2).
std::int64_t expanded_length_for_layers(std::int64_t height, std::int64_t width,
                                        std::int64_t layers);

// Rows are messages: [N, L] of 0/1 values.
template <typename T>
Tensor<T> message_batch(std::span<const SecretMessage> messages);

template <typename T>
std::vector<SoftMessage> soft_messages(const Tensor<T>& batch);

template <typename T>
class MessageProcessor {
 public:
  MessageProcessor() = default;
  MessageProcessor(const ModelConfig& config, std::mt19937_64& rng,
                   InitMode init = InitMode::kDefault);

  // [N, L] -> [N, C_M, H/2, W/2]
  ag::Var<T> expand(const ag::Var<T>& messages) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  const ProcessorGeometry& geometry() const { return geometry_; }

 private:
  ProcessorGeometry geometry_;
  Linear<T> dense_;
  Conv2d<T> lift_;
  std::vector<Conv2d<T>> upsample_;
  std::vector<SEBlock<T>> attention_;
};

template <typename T>
class InverseMessageProcessor {
 public:
  InverseMessageProcessor() = default;
  InverseMessageProcessor(const ModelConfig& config, std::mt19937_64& rng,
                          InitMode init = InitMode::kDefault);

  // [N, C_M, H/2, W/2] -> [N, L]
  ag::Var<T> contract(const ag::Var<T>& features) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  const ProcessorGeometry& geometry() const { return geometry_; }

 private:
  ProcessorGeometry geometry_;
  std::vector<SEBlock<T>> attention_;
  std::vector<Conv2d<T>> downsample_;
  Conv2d<T> reduce_;
  Linear<T> dense_;
};

}  // namespace invmark
