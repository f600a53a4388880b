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

// Training objectives, the post-hoc strength factor and image/message
// quality metrics.

#include <string>

#include "invmark/autograd.hpp"
#include "invmark/config.hpp"
#include "invmark/message_codec.hpp"

namespace invmark {

// mean((cover - encoded)^2)
template <typename T>
ag::Var<T> loss_en(const Tensor<T>& cover, const ag::Var<T>& encoded);

// mean((bits - soft)^2); bits as reals in {0, 1}.
template <typename T>
ag::Var<T> loss_de(const Tensor<T>& bits, const ag::Var<T>& soft);

// MSE between the LL sub-bands of cover and encoded.
template <typename T>
ag::Var<T> loss_ll(const Tensor<T>& cover, const ag::Var<T>& encoded);

template <typename T>
ag::Var<T> loss_total(const ag::Var<T>& en, const ag::Var<T>& de, const ag::Var<T>& ll,
                      const LossWeights& weights);

double loss_total(double en, double de, double ll, const LossWeights& weights);

// cover + strength * (encoded - cover)
template <typename T>
Tensor<T> apply_strength(const Tensor<T>& cover, const Tensor<T>& encoded, double strength);

// Fraction of differing bits. Throws ConfigError on length mismatch.
double ber(const SecretMessage& sent, const SecretMessage& received);
double ber(const SecretMessage& sent, const SoftMessage& received);

// PSNR in dB after 8-bit quantization of both images, over all channels
// jointly, with MAX = 255. Identical images give +infinity.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// PSNR of the raw values with peak 1.0 (no quantization).
template <typename T>
double psnr_unquantized(const Tensor<T>& a, const Tensor<T>& b);

// Mean SSIM over 8-bit quantized images: 11x11 Gaussian window with
// sigma 1.5, valid region only, C1 = (0.01*255)^2, C2 = (0.03*255)^2,
// averaged over channels (and batch items for NCHW input). Spatial dims
// must be at least 11.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

// "inf" for infinite values, otherwise the number.
std::string format_db(double value);

}  // namespace invmark
