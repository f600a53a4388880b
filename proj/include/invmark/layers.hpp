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

// Parameterized building blocks shared by the message processors and the
// coupling blocks. Every layer owns its parameters as leaf Vars and exposes
// them through visit() under a stable dotted name.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "invmark/autograd.hpp"

namespace invmark {

inline constexpr double kLeakySlope = 0.2;

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, ag::Var<T>& param)>;

enum class InitMode {
  kDefault,  // Kaiming-uniform weights, zero bias.
  kZero,     // All parameters zero.
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
         std::int64_t stride, std::mt19937_64& rng, InitMode init = InitMode::kDefault,
         double gain = 1.0);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  void set_bias(T value) { bias_.mutable_value().fill(value); }

  std::int64_t in_channels() const { return weight_.dim(1); }
  std::int64_t out_channels() const { return weight_.dim(0); }

 private:
  ag::Var<T> weight_;
  ag::Var<T> bias_;
  std::int64_t stride_ = 1;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::int64_t in_features, std::int64_t out_features, std::mt19937_64& rng,
         InitMode init = InitMode::kDefault);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

 private:
  ag::Var<T> weight_;
  ag::Var<T> bias_;
};

// `depth` 3x3 convolutions with dense connectivity: layer i sees the input
// concatenated with the outputs of all earlier layers. The first depth-1
// layers emit `growth` channels followed by a leaky ReLU; the last emits
// `out_channels` with no activation.
template <typename T>
class DenseBlock {
 public:
  DenseBlock() = default;
  // final_init applies to the last layer only (kZero makes the block output
  // exactly zero until trained). final_gain scales its kDefault weights.
  DenseBlock(std::int64_t in_channels, std::int64_t out_channels, std::int64_t depth,
             std::int64_t growth, std::mt19937_64& rng, InitMode final_init,
             double final_gain = 1.0);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  void set_output_bias(T value) { layers_.back().set_bias(value); }

  std::int64_t in_channels() const { return in_channels_; }
  std::int64_t out_channels() const { return layers_.back().out_channels(); }

 private:
  std::int64_t in_channels_ = 0;
  std::vector<Conv2d<T>> layers_;
};

// 3x3 conv + leaky ReLU, reweighted per channel by a squeeze-and-excitation
// gate (global pool -> fc -> leaky ReLU -> fc -> sigmoid), added back to the
// input.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(std::int64_t channels, std::int64_t reduction, std::mt19937_64& rng,
          InitMode init = InitMode::kDefault);

  ag::Var<T> operator()(const ag::Var<T>& x) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);

 private:
  Conv2d<T> conv_;
  Linear<T> squeeze_;
  Linear<T> excite_;
};

}  // namespace invmark
