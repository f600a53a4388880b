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

// Compute kernels behind the differentiable ops. Each hot kernel has an
// OpenMP-parallel implementation (parallel over batch items or planes) and a
// straightforward serial version in `reference` that the tests and the
// benchmark compare against.

#include <cstdint>
#include <span>

namespace invmark::kernels {

struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t pad = 1;

  std::int64_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::int64_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::int64_t patch_size() const { return in_channels * kernel * kernel; }
};

// y[N,Co,Ho,Wo] = conv(x[N,Ci,H,W], w[Co,Ci,k,k]) + b[Co]; zero padding.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b,
                    T* y);

// Writes (overwrites) dx, dw and db. Any of the three may be null to skip it.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db);

// Depthwise separable filter over `planes` independent HxW planes, with the
// same odd-length 1-D taps along both axes and reflect padding
// (mirror without repeating the edge sample).
template <typename T>
void separable_filter_reflect(std::int64_t planes, std::int64_t height,
                              std::int64_t width, std::span<const T> taps,
                              const T* x, T* y);

// Adjoint (transpose) of separable_filter_reflect; used for its gradient.
template <typename T>
void separable_filter_reflect_adjoint(std::int64_t planes, std::int64_t height,
                                      std::int64_t width,
                                      std::span<const T> taps, const T* dy,
                                      T* dx);

// Orthonormal single-level Haar analysis. x is [N,C,H,W], f is [N,4C,H/2,W/2]
// with sub-bands (LL, HL, LH, HH) interleaved per source channel.
template <typename T>
void haar_analysis(std::int64_t batch, std::int64_t channels,
                   std::int64_t height, std::int64_t width, const T* x, T* f);

// Inverse (and transpose) of haar_analysis; height/width are the pixel dims.
template <typename T>
void haar_synthesis(std::int64_t batch, std::int64_t channels,
                    std::int64_t height, std::int64_t width, const T* f, T* x);

// Maps index i in [-(n-1), 2n-2] (and beyond, by repetition) into [0, n).
std::int64_t reflect_index(std::int64_t i, std::int64_t n);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b,
                    T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db);

// Direct 2-D filtering with the outer-product kernel taps x taps.
template <typename T>
void separable_filter_reflect(std::int64_t planes, std::int64_t height,
                              std::int64_t width, std::span<const T> taps,
                              const T* x, T* y);

// Haar analysis through the explicit 4x4 orthonormal matrix.
template <typename T>
void haar_analysis(std::int64_t batch, std::int64_t channels,
                   std::int64_t height, std::int64_t width, const T* x, T* f);

}  // namespace reference

}  // namespace invmark::kernels
