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

// Single-level orthonormal Haar transform between pixel space [.., C, H, W]
// and sub-band space [.., 4C, H/2, W/2]. For every source channel c the
// sub-bands occupy channels 4c..4c+3 in the order LL, HL, LH, HH; for a 2x2
// block [[a, b], [c, d]]:
//
//   LL = (a + b + c + d) / 2    HL = (a - b + c - d) / 2
//   LH = (a + b - c - d) / 2    HH = (a - b - c + d) / 2
//
// The graph versions live in autograd.hpp (ag::haar_dwt, ag::haar_iwt).

#include "invmark/tensor.hpp"

namespace invmark {

// Accepts CHW or NCHW. Throws DimensionError for odd H or W.
template <typename T>
Tensor<T> haar_dwt(const Tensor<T>& image);

// Accepts CHW or NCHW sub-band stacks. Throws DimensionError when the channel
// count is not a multiple of 4.
template <typename T>
Tensor<T> haar_iwt(const Tensor<T>& features);

// LL channels of haar_dwt(image): [.., C, H/2, W/2].
template <typename T>
Tensor<T> extract_ll(const Tensor<T>& image);

}  // namespace invmark
