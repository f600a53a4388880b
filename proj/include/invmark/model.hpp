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

// The assembled watermarking network:
//
//   encode: I_co -> DWT -> (F_co, expand(M)) -> coupling blocks -> F_en
//           I_en = I_co + IWT(F_en - F_co)
//   decode: I_no -> DWT -> (F_no, z) -> inverse blocks -> F_M' -> contract
//
// Writing I_en as a residual is the same linear map as IWT(F_en), but it
// leaves I_en bit-identical to I_co while F_en == F_co.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "invmark/config.hpp"
#include "invmark/inn.hpp"
#include "invmark/message_codec.hpp"

namespace invmark {

struct ModelInit {
  InitMode processors = InitMode::kDefault;
  // Last layer of every phi/rho/eta. kZero starts training from the
  // identity embedding.
  InitMode coupling_final = InitMode::kZero;
};

template <typename T>
struct EncodeResult {
  ag::Var<T> image;  // I_en [N, C, H, W]
  ag::Var<T> lost;   // r [N, C_M, H/2, W/2]
};

template <typename T>
class WatermarkModel {
 public:
  WatermarkModel(const ModelConfig& config, std::uint64_t seed, ModelInit init = {});

  const ModelConfig& config() const { return config_; }
  const ProcessorGeometry& geometry() const { return processor_.geometry(); }
  std::span<const CouplingBlock<T>> blocks() const { return blocks_; }
  const MessageProcessor<T>& processor() const { return processor_; }
  const InverseMessageProcessor<T>& inverse_processor() const { return inverse_; }

  // cover [N, C, H, W], messages [N, L].
  EncodeResult<T> encode(const Tensor<T>& cover, const ag::Var<T>& messages) const;
  // noised [N, C, H, W], aux [N, C_M, H/2, W/2]; returns soft bits [N, L].
  ag::Var<T> decode(const ag::Var<T>& noised, const Tensor<T>& aux) const;

  Shape aux_shape(std::int64_t batch) const;
  Shape image_shape(std::int64_t batch) const;

  // Every trainable tensor with a stable dotted name, in a fixed order.
  void visit(const ParamVisitor<T>& fn);
  std::vector<std::pair<std::string, ag::Var<T>>> parameters();
  std::int64_t parameter_count();

  // Inference helpers (no graph recorded).
  Tensor<T> embed(const Tensor<T>& cover, std::span<const SecretMessage> messages) const;
  // zero_aux selects z = 0 instead of the seeded Gaussian draw.
  std::vector<SoftMessage> extract(const Tensor<T>& image, std::uint64_t aux_seed,
                                   bool zero_aux = false) const;

 private:
  void check_image(const Shape& s, const char* what) const;

  ModelConfig config_;
  MessageProcessor<T> processor_;
  InverseMessageProcessor<T> inverse_;
  std::vector<CouplingBlock<T>> blocks_;
};

}  // namespace invmark
