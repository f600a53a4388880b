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

// Invertible coupling blocks. With b1 the image sub-band branch and b2 the
// watermark branch, one block computes
//
//   b1' = b1 + phi(b2)
//   b2' = b2 * exp(k * sigmoid(rho(b1'))) + eta(b1')
//
// and its exact inverse
//
//   b2 = (b2' - eta(b1')) * exp(-k * sigmoid(rho(b1')))
//   b1 = b1' - phi(b2)
//
// phi, rho and eta are dense blocks. The same parameter objects serve both
// directions.

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "invmark/config.hpp"
#include "invmark/layers.hpp"

namespace invmark {

template <typename T>
struct InnState {
  ag::Var<T> b1;  // [N, 4C, H/2, W/2]
  ag::Var<T> b2;  // [N, C_M, H/2, W/2]
};

// sigmoid is clamped to [kSigmoidFloor, 1 - kSigmoidFloor] before scaling.
inline constexpr double kSigmoidFloor = 1e-6;

// Initial output bias of rho. Each block multiplies b2 by at least
// exp(k * sigmoid(rho)); starting near sigmoid(-4) = 0.018 keeps a deep stack
// from growing the watermark branch by e per block, which otherwise leaves the
// float inverse with errors far above the data. kDefault final layers also
// start at a tenth of the Kaiming range.
inline constexpr double kRhoInitBias = -4.0;
inline constexpr double kFinalLayerGain = 0.1;

template <typename T>
class CouplingBlock {
 public:
  CouplingBlock() = default;
  // Builds phi: C_M -> 4C and rho, eta: 4C -> C_M. final_init controls the
  // last layer of each dense block; rho's output bias starts at kRhoInitBias
  // in either mode.
  CouplingBlock(std::int64_t image_channels, std::int64_t watermark_channels,
                std::int64_t dense_depth, std::int64_t dense_growth, double sigmoid_scale,
                std::mt19937_64& rng, InitMode final_init);

  InnState<T> forward(const InnState<T>& state) const;
  InnState<T> inverse(const InnState<T>& state) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

  double sigmoid_scale() const { return scale_; }

 private:
  ag::Var<T> log_scale(const ag::Var<T>& b1) const;
  void check(const InnState<T>& state) const;

  DenseBlock<T> phi_;
  DenseBlock<T> rho_;
  DenseBlock<T> eta_;
  double scale_ = 2.0;
};

template <typename T>
std::vector<CouplingBlock<T>> make_coupling_stack(const ModelConfig& config,
                                                  std::mt19937_64& rng, InitMode final_init);

// Runs the blocks first to last from (F_co, F_M); returns (F_en, r).
template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> encode_features(const ag::Var<T>& cover_features,
                                                  const ag::Var<T>& watermark_features,
                                                  std::span<const CouplingBlock<T>> blocks);

// Runs the inverses last to first from (F_no, z); returns (F_rec, F_M').
template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> decode_features(const ag::Var<T>& noised_features,
                                                  const ag::Var<T>& aux,
                                                  std::span<const CouplingBlock<T>> blocks);

// Auxiliary input for the inverse pass: i.i.d. standard normal from `seed`.
template <typename T>
Tensor<T> sample_aux(const Shape& shape, std::uint64_t seed);

}  // namespace invmark
