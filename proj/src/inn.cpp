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

#include "invmark/inn.hpp"

namespace invmark {

template <typename T>
CouplingBlock<T>::CouplingBlock(std::int64_t image_channels, std::int64_t watermark_channels,
                                std::int64_t dense_depth, std::int64_t dense_growth,
                                double sigmoid_scale, std::mt19937_64& rng, InitMode final_init)
    : phi_(watermark_channels, image_channels, dense_depth, dense_growth, rng, final_init,
           kFinalLayerGain),
      rho_(image_channels, watermark_channels, dense_depth, dense_growth, rng, final_init,
           kFinalLayerGain),
      eta_(image_channels, watermark_channels, dense_depth, dense_growth, rng, final_init,
           kFinalLayerGain),
      scale_(sigmoid_scale) {
  if (!(sigmoid_scale > 0.0)) throw ConfigError("sigmoid_scale must be positive");
  rho_.set_output_bias(static_cast<T>(kRhoInitBias));
}

template <typename T>
void CouplingBlock<T>::check(const InnState<T>& s) const {
  const auto& a = s.b1.shape();
  const auto& b = s.b2.shape();
  if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3] ||
      a[1] != phi_.out_channels() || b[1] != phi_.in_channels()) {
    throw DimensionError("coupling block: branch shapes " + shape_string(a) + " / " +
                         shape_string(b) + " do not match the block (" +
                         std::to_string(phi_.out_channels()) + ", " +
                         std::to_string(phi_.in_channels()) + " channels)");
  }
}

template <typename T>
ag::Var<T> CouplingBlock<T>::log_scale(const ag::Var<T>& b1) const {
  const T floor(kSigmoidFloor);
  return ag::scale(ag::clamp(ag::sigmoid(rho_(b1)), floor, T(1) - floor), T(scale_));
}

template <typename T>
InnState<T> CouplingBlock<T>::forward(const InnState<T>& s) const {
  check(s);
  const auto b1 = ag::add(s.b1, phi_(s.b2));
  const auto b2 = ag::add(ag::mul(s.b2, ag::exp(log_scale(b1))), eta_(b1));
  return {b1, b2};
}

template <typename T>
InnState<T> CouplingBlock<T>::inverse(const InnState<T>& s) const {
  check(s);
  const auto b2 =
      ag::mul(ag::sub(s.b2, eta_(s.b1)), ag::exp(ag::scale(log_scale(s.b1), T(-1))));
  const auto b1 = ag::sub(s.b1, phi_(b2));
  return {b1, b2};
}

template <typename T>
void CouplingBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  phi_.visit(prefix + ".phi", fn);
  rho_.visit(prefix + ".rho", fn);
  eta_.visit(prefix + ".eta", fn);
}

template <typename T>
std::vector<CouplingBlock<T>> make_coupling_stack(const ModelConfig& config,
                                                  std::mt19937_64& rng, InitMode final_init) {
  std::vector<CouplingBlock<T>> blocks;
  blocks.reserve(static_cast<std::size_t>(config.inn_blocks));
  for (std::int64_t i = 0; i < config.inn_blocks; ++i) {
    blocks.emplace_back(4 * config.channels, config.watermark_channels(), config.dense_depth,
                        config.dense_growth, config.sigmoid_scale, rng, final_init);
  }
  return blocks;
}

template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> encode_features(const ag::Var<T>& cover_features,
                                                  const ag::Var<T>& watermark_features,
                                                  std::span<const CouplingBlock<T>> blocks) {
  InnState<T> state{cover_features, watermark_features};
  for (const auto& block : blocks) state = block.forward(state);
  return {state.b1, state.b2};
}

template <typename T>
std::pair<ag::Var<T>, ag::Var<T>> decode_features(const ag::Var<T>& noised_features,
                                                  const ag::Var<T>& aux,
                                                  std::span<const CouplingBlock<T>> blocks) {
  InnState<T> state{noised_features, aux};
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) state = it->inverse(state);
  return {state.b1, state.b2};
}

template <typename T>
Tensor<T> sample_aux(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(normal(rng));
  return out;
}

#define INVMARK_INSTANTIATE_INN(T)                                                        \
  template class CouplingBlock<T>;                                                        \
  template std::vector<CouplingBlock<T>> make_coupling_stack<T>(const ModelConfig&,       \
                                                                std::mt19937_64&, InitMode); \
  template std::pair<ag::Var<T>, ag::Var<T>> encode_features<T>(                          \
      const ag::Var<T>&, const ag::Var<T>&, std::span<const CouplingBlock<T>>);           \
  template std::pair<ag::Var<T>, ag::Var<T>> decode_features<T>(                          \
      const ag::Var<T>&, const ag::Var<T>&, std::span<const CouplingBlock<T>>);           \
  template Tensor<T> sample_aux<T>(const Shape&, std::uint64_t);

INVMARK_INSTANTIATE_INN(float)
INVMARK_INSTANTIATE_INN(double)

}  // namespace invmark
