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

#include "invmark/message_codec.hpp"

#include <cctype>

namespace invmark {

std::string SecretMessage::to_bit_string() const {
  std::string out;
  out.reserve(bits.size());
  for (auto b : bits) out.push_back(b ? '1' : '0');
  return out;
}

SecretMessage SecretMessage::random(std::int64_t length, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  SecretMessage m;
  m.bits.resize(static_cast<std::size_t>(length));
  for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
  return m;
}

SecretMessage parse_message(std::string_view text, std::int64_t length) {
  SecretMessage m;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    const auto digits = text.substr(2);
    const auto expected = static_cast<std::size_t>((length + 3) / 4);
    if (digits.size() != expected) {
      throw ConfigError("hex message must have " + std::to_string(expected) +
                        " digits for " + std::to_string(length) + " bits, got " +
                        std::to_string(digits.size()));
    }
    std::vector<std::uint8_t> all;
    for (char ch : digits) {
      if (!std::isxdigit(static_cast<unsigned char>(ch))) {
        throw ConfigError(std::string("invalid hex digit '") + ch + "' in message");
      }
      const int v = std::stoi(std::string(1, ch), nullptr, 16);
      for (int k = 3; k >= 0; --k) all.push_back(static_cast<std::uint8_t>((v >> k) & 1));
    }
    const std::size_t surplus = all.size() - static_cast<std::size_t>(length);
    for (std::size_t i = 0; i < surplus; ++i) {
      if (all[i]) throw ConfigError("hex message has more than " + std::to_string(length) + " bits");
    }
    m.bits.assign(all.begin() + static_cast<std::ptrdiff_t>(surplus), all.end());
    return m;
  }
  if (static_cast<std::int64_t>(text.size()) != length) {
    throw ConfigError("message must have " + std::to_string(length) + " bits, got " +
                      std::to_string(text.size()) + " characters");
  }
  for (char ch : text) {
    if (ch != '0' && ch != '1') {
      throw ConfigError(std::string("invalid bit '") + ch + "' in message");
    }
    m.bits.push_back(ch == '1' ? 1 : 0);
  }
  return m;
}

SecretMessage harden(const SoftMessage& soft) {
  SecretMessage m;
  m.bits.reserve(soft.values.size());
  for (double v : soft.values) m.bits.push_back(v >= 0.5 ? 1 : 0);
  return m;
}

std::int64_t expanded_length_for_layers(std::int64_t height, std::int64_t width,
                                        std::int64_t layers) {
  const std::int64_t div = std::int64_t{1} << (layers - 1);
  return (height / div) * (width / div);
}

ProcessorGeometry resolve_geometry(const ModelConfig& config) {
  const std::int64_t fh = config.image_height / 2;
  const std::int64_t fw = config.image_width / 2;
  const std::int64_t length = config.message_length;
  if (length < 1) throw ConfigError("message_length must be >= 1");
  if (fh < 1 || fw < 1) throw ConfigError("image too small");
  auto reachable = [&](std::int64_t u) {
    const std::int64_t f = std::int64_t{1} << u;
    return fh % f == 0 && fw % f == 0;
  };
  std::int64_t stages = config.upsample_stages;
  if (stages < 0) {
    stages = 0;
    for (std::int64_t u = 1; u < 32 && reachable(u); ++u) {
      if ((fh >> u) * (fw >> u) >= 4 * length) stages = u;
    }
  } else if (stages >= 32 || !reachable(stages)) {
    throw ConfigError("upsample_stages=" + std::to_string(stages) +
                      " cannot reach the " + std::to_string(fh) + "x" + std::to_string(fw) +
                      " feature grid by doubling");
  }
  ProcessorGeometry g;
  g.message_length = length;
  g.upsample_stages = stages;
  g.rows = fh >> stages;
  g.cols = fw >> stages;
  g.expanded_length = g.rows * g.cols;
  g.feature_channels = config.watermark_channels();
  g.feature_height = fh;
  g.feature_width = fw;
  if (g.expanded_length < length) {
    throw ConfigError("expanded length " + std::to_string(g.expanded_length) +
                      " is shorter than the message (" + std::to_string(length) + " bits)");
  }
  return g;
}

template <typename T>
Tensor<T> message_batch(std::span<const SecretMessage> messages) {
  if (messages.empty()) throw ConfigError("empty message batch");
  const auto length = static_cast<std::int64_t>(messages[0].size());
  Tensor<T> out({static_cast<std::int64_t>(messages.size()), length});
  for (std::size_t n = 0; n < messages.size(); ++n) {
    if (static_cast<std::int64_t>(messages[n].size()) != length) {
      throw ConfigError("messages in a batch must share one length");
    }
    for (std::int64_t i = 0; i < length; ++i) {
      out[static_cast<std::int64_t>(n) * length + i] = messages[n].bits[i] ? T(1) : T(0);
    }
  }
  return out;
}

template <typename T>
std::vector<SoftMessage> soft_messages(const Tensor<T>& batch) {
  if (batch.rank() != 2) throw DimensionError("soft_messages expects [N, L]");
  std::vector<SoftMessage> out(static_cast<std::size_t>(batch.dim(0)));
  for (std::int64_t n = 0; n < batch.dim(0); ++n) {
    for (std::int64_t i = 0; i < batch.dim(1); ++i) {
      out[n].values.push_back(static_cast<double>(batch[n * batch.dim(1) + i]));
    }
  }
  return out;
}

template <typename T>
MessageProcessor<T>::MessageProcessor(const ModelConfig& config, std::mt19937_64& rng,
                                      InitMode init)
    : geometry_(resolve_geometry(config)) {
  const std::int64_t cm = geometry_.feature_channels;
  dense_ = Linear<T>(geometry_.message_length, geometry_.expanded_length, rng, init);
  lift_ = Conv2d<T>(1, cm, 3, 1, rng, init);
  for (std::int64_t i = 0; i < geometry_.upsample_stages; ++i) {
    upsample_.emplace_back(cm, cm, 3, 1, rng, init);
  }
  for (std::int64_t i = 0; i < config.se_blocks; ++i) {
    attention_.emplace_back(cm, config.se_reduction, rng, init);
  }
}

template <typename T>
ag::Var<T> MessageProcessor<T>::expand(const ag::Var<T>& messages) const {
  if (messages.shape().size() != 2 || messages.dim(1) != geometry_.message_length) {
    throw ConfigError("message processor expects [N, " +
                      std::to_string(geometry_.message_length) + "], got " +
                      shape_string(messages.shape()));
  }
  const T slope(kLeakySlope);
  auto x = ag::leaky_relu(dense_(messages), slope);
  x = ag::reshape(x, {messages.dim(0), 1, geometry_.rows, geometry_.cols});
  x = ag::leaky_relu(lift_(x), slope);
  for (const auto& conv : upsample_) {
    x = ag::leaky_relu(conv(ag::upsample_nearest2x(x)), slope);
  }
  for (const auto& se : attention_) x = se(x);
  return x;
}

template <typename T>
void MessageProcessor<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  dense_.visit(prefix + ".dense", fn);
  lift_.visit(prefix + ".lift", fn);
  for (std::size_t i = 0; i < upsample_.size(); ++i) {
    upsample_[i].visit(prefix + ".up" + std::to_string(i), fn);
  }
  for (std::size_t i = 0; i < attention_.size(); ++i) {
    attention_[i].visit(prefix + ".se" + std::to_string(i), fn);
  }
}

template <typename T>
InverseMessageProcessor<T>::InverseMessageProcessor(const ModelConfig& config,
                                                    std::mt19937_64& rng, InitMode init)
    : geometry_(resolve_geometry(config)) {
  const std::int64_t cm = geometry_.feature_channels;
  for (std::int64_t i = 0; i < config.se_blocks; ++i) {
    attention_.emplace_back(cm, config.se_reduction, rng, init);
  }
  for (std::int64_t i = 0; i < geometry_.upsample_stages; ++i) {
    downsample_.emplace_back(cm, cm, 3, 2, rng, init);
  }
  reduce_ = Conv2d<T>(cm, 1, 3, 1, rng, init);
  dense_ = Linear<T>(geometry_.expanded_length, geometry_.message_length, rng, init);
}

template <typename T>
ag::Var<T> InverseMessageProcessor<T>::contract(const ag::Var<T>& features) const {
  const Shape expected{geometry_.feature_channels, geometry_.feature_height,
                       geometry_.feature_width};
  if (features.shape().size() != 4 ||
      !std::equal(expected.begin(), expected.end(), features.shape().begin() + 1)) {
    throw ConfigError("inverse message processor expects [N, " + shape_string(expected) +
                      "], got " + shape_string(features.shape()));
  }
  const T slope(kLeakySlope);
  auto x = features;
  for (const auto& se : attention_) x = se(x);
  for (const auto& conv : downsample_) x = ag::leaky_relu(conv(x), slope);
  x = ag::leaky_relu(reduce_(x), slope);
  x = ag::reshape(x, {features.dim(0), geometry_.expanded_length});
  return dense_(x);
}

template <typename T>
void InverseMessageProcessor<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  for (std::size_t i = 0; i < attention_.size(); ++i) {
    attention_[i].visit(prefix + ".se" + std::to_string(i), fn);
  }
  for (std::size_t i = 0; i < downsample_.size(); ++i) {
    downsample_[i].visit(prefix + ".down" + std::to_string(i), fn);
  }
  reduce_.visit(prefix + ".reduce", fn);
  dense_.visit(prefix + ".dense", fn);
}

template Tensor<float> message_batch<float>(std::span<const SecretMessage>);
template Tensor<double> message_batch<double>(std::span<const SecretMessage>);
template std::vector<SoftMessage> soft_messages<float>(const Tensor<float>&);
template std::vector<SoftMessage> soft_messages<double>(const Tensor<double>&);
template class MessageProcessor<float>;
template class MessageProcessor<double>;
template class InverseMessageProcessor<float>;
template class InverseMessageProcessor<double>;

}  // namespace invmark
