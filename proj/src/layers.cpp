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

#include "invmark/layers.hpp"

#include <cmath>

namespace invmark {
namespace {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  Tensor<T> out(std::move(shape));
  const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
                  std::int64_t stride, std::mt19937_64& rng, InitMode init, double gain)
    : stride_(stride) {
  Shape wshape{out_channels, in_channels, kernel, kernel};
  Tensor<T> w(wshape);
  if (init == InitMode::kDefault) {
    w = kaiming_uniform<T>(wshape, in_channels * kernel * kernel, rng);
    for (auto& v : w.values()) v = static_cast<T>(v * gain);
  }
  weight_ = ag::Var<T>::parameter(std::move(w));
  bias_ = ag::Var<T>::parameter(Tensor<T>({out_channels}));
}

template <typename T>
ag::Var<T> Conv2d<T>::operator()(const ag::Var<T>& x) const {
  return ag::conv2d(x, weight_, bias_, stride_, weight_.dim(2) / 2);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight_);
  fn(prefix + ".bias", bias_);
}

template <typename T>
Linear<T>::Linear(std::int64_t in_features, std::int64_t out_features, std::mt19937_64& rng,
                  InitMode init) {
  Shape wshape{out_features, in_features};
  weight_ = ag::Var<T>::parameter(init == InitMode::kZero
                                      ? Tensor<T>(wshape)
                                      : kaiming_uniform<T>(wshape, in_features, rng));
  bias_ = ag::Var<T>::parameter(Tensor<T>({out_features}));
}

template <typename T>
ag::Var<T> Linear<T>::operator()(const ag::Var<T>& x) const {
  return ag::linear(x, weight_, bias_);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  fn(prefix + ".weight", weight_);
  fn(prefix + ".bias", bias_);
}

template <typename T>
DenseBlock<T>::DenseBlock(std::int64_t in_channels, std::int64_t out_channels,
                          std::int64_t depth, std::int64_t growth, std::mt19937_64& rng,
                          InitMode final_init, double final_gain)
    : in_channels_(in_channels) {
  if (depth < 1 || growth < 1) throw ConfigError("dense block needs depth >= 1 and growth >= 1");
  for (std::int64_t i = 0; i + 1 < depth; ++i) {
    layers_.emplace_back(in_channels + i * growth, growth, 3, 1, rng);
  }
  layers_.emplace_back(in_channels + (depth - 1) * growth, out_channels, 3, 1, rng, final_init,
                       final_gain);
}

template <typename T>
ag::Var<T> DenseBlock<T>::operator()(const ag::Var<T>& x) const {
  if (x.shape().size() != 4 || x.dim(1) != in_channels_) {
    throw ConfigError("dense block expects " + std::to_string(in_channels_) +
                      " input channels, got " + shape_string(x.shape()));
  }
  std::vector<ag::Var<T>> features{x};
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    const auto input = features.size() == 1 ? x : ag::concat_channels<T>(features);
    features.push_back(ag::leaky_relu(layers_[i](input), T(kLeakySlope)));
  }
  const auto input = features.size() == 1 ? x : ag::concat_channels<T>(features);
  return layers_.back()(input);
}

template <typename T>
void DenseBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].visit(prefix + ".conv" + std::to_string(i), fn);
  }
}

template <typename T>
SEBlock<T>::SEBlock(std::int64_t channels, std::int64_t reduction, std::mt19937_64& rng,
                    InitMode init)
    : conv_(channels, channels, 3, 1, rng, init),
      squeeze_(channels, std::max<std::int64_t>(1, channels / reduction), rng, init),
      excite_(std::max<std::int64_t>(1, channels / reduction), channels, rng, init) {}

template <typename T>
ag::Var<T> SEBlock<T>::operator()(const ag::Var<T>& x) const {
  const auto features = ag::leaky_relu(conv_(x), T(kLeakySlope));
  const auto pooled = ag::global_avg_pool(features);
  const auto gate =
      ag::sigmoid(excite_(ag::leaky_relu(squeeze_(pooled), T(kLeakySlope))));
  return ag::add(x, ag::channel_scale(features, gate));
}

template <typename T>
void SEBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  conv_.visit(prefix + ".conv", fn);
  squeeze_.visit(prefix + ".squeeze", fn);
  excite_.visit(prefix + ".excite", fn);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class DenseBlock<float>;
template class DenseBlock<double>;
template class SEBlock<float>;
template class SEBlock<double>;

}  // namespace invmark
