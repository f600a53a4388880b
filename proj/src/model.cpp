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

#include "invmark/model.hpp"

namespace invmark {

template <typename T>
WatermarkModel<T>::WatermarkModel(const ModelConfig& config, std::uint64_t seed,
                                  ModelInit init)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  processor_ = MessageProcessor<T>(config_, rng, init.processors);
  inverse_ = InverseMessageProcessor<T>(config_, rng, init.processors);
  blocks_ = make_coupling_stack<T>(config_, rng, init.coupling_final);
}

template <typename T>
Shape WatermarkModel<T>::aux_shape(std::int64_t batch) const {
  return {batch, config_.watermark_channels(), config_.image_height / 2,
          config_.image_width / 2};
}

template <typename T>
Shape WatermarkModel<T>::image_shape(std::int64_t batch) const {
  return {batch, config_.channels, config_.image_height, config_.image_width};
}

template <typename T>
void WatermarkModel<T>::check_image(const Shape& s, const char* what) const {
  if (s.size() != 4 || s[1] != config_.channels || s[2] != config_.image_height ||
      s[3] != config_.image_width) {
    throw DimensionError(std::string(what) + ": expected [N, " + std::to_string(config_.channels) +
                         ", " + std::to_string(config_.image_height) + ", " +
                         std::to_string(config_.image_width) + "], got " + shape_string(s));
  }
}

template <typename T>
EncodeResult<T> WatermarkModel<T>::encode(const Tensor<T>& cover,
                                          const ag::Var<T>& messages) const {
  check_image(cover.shape(), "encode");
  if (messages.shape().size() != 2 || messages.dim(0) != cover.dim(0)) {
    throw ConfigError("encode: expected " + std::to_string(cover.dim(0)) +
                      " messages, got " + shape_string(messages.shape()));
  }
  const auto cover_features = ag::haar_dwt(ag::Var<T>::constant(cover));
  const auto watermark = processor_.expand(messages);
  auto [encoded_features, lost] =
      encode_features<T>(cover_features, watermark, std::span<const CouplingBlock<T>>(blocks_));
  const auto residual = ag::haar_iwt(ag::sub(encoded_features, cover_features));
  return {ag::add(ag::Var<T>::constant(cover), residual), lost};
}

template <typename T>
ag::Var<T> WatermarkModel<T>::decode(const ag::Var<T>& noised, const Tensor<T>& aux) const {
  check_image(noised.shape(), "decode");
  require_same_shape(aux.shape(), aux_shape(noised.dim(0)), "decode aux");
  auto [recovered, watermark] = decode_features<T>(
      ag::haar_dwt(noised), ag::Var<T>::constant(aux), std::span<const CouplingBlock<T>>(blocks_));
  return inverse_.contract(watermark);
}

template <typename T>
void WatermarkModel<T>::visit(const ParamVisitor<T>& fn) {
  processor_.visit("processor", fn);
  inverse_.visit("inverse_processor", fn);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit("inn.block" + std::to_string(i), fn);
  }
}

template <typename T>
std::vector<std::pair<std::string, ag::Var<T>>> WatermarkModel<T>::parameters() {
  std::vector<std::pair<std::string, ag::Var<T>>> out;
  visit([&](const std::string& name, ag::Var<T>& p) { out.emplace_back(name, p); });
  return out;
}

template <typename T>
std::int64_t WatermarkModel<T>::parameter_count() {
  std::int64_t total = 0;
  visit([&](const std::string&, ag::Var<T>& p) { total += p.value().numel(); });
  return total;
}

template <typename T>
Tensor<T> WatermarkModel<T>::embed(const Tensor<T>& cover,
                                   std::span<const SecretMessage> messages) const {
  ag::NoGradGuard guard;
  for (const auto& m : messages) {
    if (static_cast<std::int64_t>(m.size()) != config_.message_length) {
      throw ConfigError("message has " + std::to_string(m.size()) + " bits, model expects " +
                        std::to_string(config_.message_length));
    }
  }
  return encode(cover, ag::Var<T>::constant(message_batch<T>(messages))).image.value();
}

template <typename T>
std::vector<SoftMessage> WatermarkModel<T>::extract(const Tensor<T>& image,
                                                    std::uint64_t aux_seed,
                                                    bool zero_aux) const {
  ag::NoGradGuard guard;
  const Shape shape = aux_shape(image.dim(0));
  const Tensor<T> aux = zero_aux ? Tensor<T>(shape) : sample_aux<T>(shape, aux_seed);
  return soft_messages(decode(ag::Var<T>::constant(image), aux).value());
}

template class WatermarkModel<float>;
template class WatermarkModel<double>;

}  // namespace invmark
