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

#include "invmark/wavelet.hpp"

#include "invmark/kernels.hpp"

namespace invmark {
namespace {

struct Dims {
  std::int64_t batch, channels, height, width;
};

Dims split(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw DimensionError(std::string(what) + ": expected CHW or NCHW, got " + shape_string(s));
}

Shape join(const Shape& like, std::int64_t c, std::int64_t h, std::int64_t w) {
  if (like.size() == 3) return {c, h, w};
  return {like[0], c, h, w};
}

void require_even(const Dims& d, const Shape& s) {
  if (d.height % 2 != 0 || d.width % 2 != 0) {
    throw DimensionError("haar_dwt: spatial dims must be even, got " + shape_string(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> haar_dwt(const Tensor<T>& image) {
  const Dims d = split(image.shape(), "haar_dwt");
  require_even(d, image.shape());
  Tensor<T> out(join(image.shape(), 4 * d.channels, d.height / 2, d.width / 2));
  kernels::haar_analysis<T>(d.batch, d.channels, d.height, d.width, image.data(), out.data());
  return out;
}

template <typename T>
Tensor<T> haar_iwt(const Tensor<T>& features) {
  const Dims d = split(features.shape(), "haar_iwt");
  if (d.channels % 4 != 0) {
    throw DimensionError("haar_iwt: channel count must be divisible by 4, got " +
                         shape_string(features.shape()));
  }
  Tensor<T> out(join(features.shape(), d.channels / 4, 2 * d.height, 2 * d.width));
  kernels::haar_synthesis<T>(d.batch, d.channels / 4, 2 * d.height, 2 * d.width,
                             features.data(), out.data());
  return out;
}

template <typename T>
Tensor<T> extract_ll(const Tensor<T>& image) {
  const Dims d = split(image.shape(), "extract_ll");
  const auto bands = haar_dwt(image);
  const std::int64_t plane = (d.height / 2) * (d.width / 2);
  Tensor<T> out(join(image.shape(), d.channels, d.height / 2, d.width / 2));
  for (std::int64_t p = 0; p < d.batch * d.channels; ++p) {
    std::copy(bands.data() + 4 * p * plane, bands.data() + (4 * p + 1) * plane,
              out.data() + p * plane);
  }
  return out;
}

template Tensor<float> haar_dwt<float>(const Tensor<float>&);
template Tensor<double> haar_dwt<double>(const Tensor<double>&);
template Tensor<float> haar_iwt<float>(const Tensor<float>&);
template Tensor<double> haar_iwt<double>(const Tensor<double>&);
template Tensor<float> extract_ll<float>(const Tensor<float>&);
template Tensor<double> extract_ll<double>(const Tensor<double>&);

}  // namespace invmark
