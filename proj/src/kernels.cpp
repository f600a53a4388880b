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

#include "invmark/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <vector>

#ifdef INVMARK_HAS_OPENMP
#include <omp.h>
#endif

namespace invmark::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Output columns [lo, hi) whose input column ox*stride - pad + kx is inside
// the image.
struct ColumnRange {
  std::int64_t lo;
  std::int64_t hi;
};

ColumnRange valid_columns(const ConvGeometry& g, std::int64_t kx, std::int64_t wo) {
  const std::int64_t shift = g.pad - kx;
  std::int64_t lo = shift > 0 ? (shift + g.stride - 1) / g.stride : 0;
  std::int64_t hi = (g.width - 1 + shift) / g.stride + 1;
  if (g.width - 1 + shift < 0) hi = 0;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
  return {lo, hi};
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::int64_t ho = g.out_height();
  const std::int64_t wo = g.out_width();
  const std::int64_t k = g.kernel;
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        const auto [lo, hi] = valid_columns(g, kx, wo);
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          std::fill(dst + hi, dst + wo, T(0));
          const T* src = plane + iy * g.width - g.pad + kx;
          if (g.stride == 1) {
            std::memcpy(dst + lo, src + lo, static_cast<std::size_t>(hi - lo) * sizeof(T));
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

// Accumulates col back into x (x must be zeroed by the caller).
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
  const std::int64_t ho = g.out_height();
  const std::int64_t wo = g.out_width();
  const std::int64_t k = g.kernel;
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    T* plane = x + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * ho * wo;
        const auto [lo, hi] = valid_columns(g, kx, wo);
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + oy * wo;
          T* dst = plane + iy * g.width - g.pad + kx;
          if (g.stride == 1) {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> pad_reflect_row(const T* src, std::int64_t n, std::int64_t r) {
  std::vector<T> out(static_cast<std::size_t>(n + 2 * r));
  for (std::int64_t i = -r; i < n + r; ++i) out[i + r] = src[reflect_index(i, n)];
  return out;
}

}  // namespace

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b,
                    T* y) {
  const std::int64_t hw_out = g.out_height() * g.out_width();
  const std::int64_t patch = g.patch_size();
  const std::int64_t in_stride = g.in_channels * g.height * g.width;
  const std::int64_t out_stride = g.out_channels * hw_out;
  Eigen::Map<const RowMat<T>> weights(w, g.out_channels, patch);
#pragma omp parallel
  {
    RowMat<T> col(patch, hw_out);
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      im2col(g, x + n * in_stride, col.data());
      Eigen::Map<RowMat<T>> out(y + n * out_stride, g.out_channels, hw_out);
      out.noalias() = weights * col;
      if (b != nullptr) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) out.row(o).array() += b[o];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db) {
  const std::int64_t hw_out = g.out_height() * g.out_width();
  const std::int64_t patch = g.patch_size();
  const std::int64_t in_stride = g.in_channels * g.height * g.width;
  const std::int64_t out_stride = g.out_channels * hw_out;
  Eigen::Map<const RowMat<T>> weights(w, g.out_channels, patch);
  if (dw != nullptr) std::fill(dw, dw + g.out_channels * patch, T(0));
  if (db != nullptr) std::fill(db, db + g.out_channels, T(0));
#pragma omp parallel
  {
    RowMat<T> col(patch, hw_out);
    RowMat<T> dw_local = RowMat<T>::Zero(dw ? g.out_channels : 0, dw ? patch : 0);
    std::vector<T> db_local(db ? g.out_channels : 0, T(0));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      Eigen::Map<const RowMat<T>> grad_out(dy + n * out_stride, g.out_channels,
                                           hw_out);
      if (dw != nullptr) {
        im2col(g, x + n * in_stride, col.data());
        dw_local.noalias() += grad_out * col.transpose();
      }
      if (db != nullptr) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
          db_local[o] += grad_out.row(o).sum();
        }
      }
      if (dx != nullptr) {
        col.noalias() = weights.transpose() * grad_out;
        T* dst = dx + n * in_stride;
        std::fill(dst, dst + in_stride, T(0));
        col2im(g, col.data(), dst);
      }
    }
#pragma omp critical(invmark_conv_reduce)
    {
      if (dw != nullptr) {
        Eigen::Map<RowMat<T>>(dw, g.out_channels, patch) += dw_local;
      }
      if (db != nullptr) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) db[o] += db_local[o];
      }
    }
  }
}

template <typename T>
void separable_filter_reflect(std::int64_t planes, std::int64_t height,
                              std::int64_t width, std::span<const T> taps,
                              const T* x, T* y) {
  const auto r = static_cast<std::int64_t>(taps.size() / 2);
#pragma omp parallel
  {
    std::vector<T> tmp(static_cast<std::size_t>(height * width));
    std::vector<T> column(static_cast<std::size_t>(height));
#pragma omp for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = x + p * height * width;
      T* dst = y + p * height * width;
      for (std::int64_t i = 0; i < height; ++i) {
        const auto padded = pad_reflect_row(src + i * width, width, r);
        for (std::int64_t j = 0; j < width; ++j) {
          T acc = 0;
          for (std::int64_t t = 0; t < 2 * r + 1; ++t) acc += taps[t] * padded[j + t];
          tmp[i * width + j] = acc;
        }
      }
      for (std::int64_t j = 0; j < width; ++j) {
        for (std::int64_t i = 0; i < height; ++i) column[i] = tmp[i * width + j];
        const auto padded = pad_reflect_row(column.data(), height, r);
        for (std::int64_t i = 0; i < height; ++i) {
          T acc = 0;
          for (std::int64_t t = 0; t < 2 * r + 1; ++t) acc += taps[t] * padded[i + t];
          dst[i * width + j] = acc;
        }
      }
    }
  }
}

template <typename T>
void separable_filter_reflect_adjoint(std::int64_t planes, std::int64_t height,
                                      std::int64_t width,
                                      std::span<const T> taps, const T* dy,
                                      T* dx) {
  const auto r = static_cast<std::int64_t>(taps.size() / 2);
#pragma omp parallel
  {
    std::vector<T> tmp(static_cast<std::size_t>(height * width));
#pragma omp for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = dy + p * height * width;
      T* dst = dx + p * height * width;
      std::fill(tmp.begin(), tmp.end(), T(0));
      // Transpose of the vertical pass.
      for (std::int64_t i = 0; i < height; ++i) {
        for (std::int64_t t = -r; t <= r; ++t) {
          const std::int64_t si = reflect_index(i + t, height);
          const T tap = taps[t + r];
          for (std::int64_t j = 0; j < width; ++j) {
            tmp[si * width + j] += tap * src[i * width + j];
          }
        }
      }
      std::fill(dst, dst + height * width, T(0));
      // Transpose of the horizontal pass.
      for (std::int64_t i = 0; i < height; ++i) {
        for (std::int64_t j = 0; j < width; ++j) {
          const T g = tmp[i * width + j];
          for (std::int64_t t = -r; t <= r; ++t) {
            dst[i * width + reflect_index(j + t, width)] += taps[t + r] * g;
          }
        }
      }
    }
  }
}

template <typename T>
void haar_analysis(std::int64_t batch, std::int64_t channels,
                   std::int64_t height, std::int64_t width, const T* x, T* f) {
  const std::int64_t h2 = height / 2;
  const std::int64_t w2 = width / 2;
  const std::int64_t planes = batch * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x + p * height * width;
    T* ll = f + p * 4 * h2 * w2;
    T* hl = ll + h2 * w2;
    T* lh = hl + h2 * w2;
    T* hh = lh + h2 * w2;
    for (std::int64_t i = 0; i < h2; ++i) {
      const T* top = src + 2 * i * width;
      const T* bottom = top + width;
      for (std::int64_t j = 0; j < w2; ++j) {
        const T a = top[2 * j], b = top[2 * j + 1];
        const T c = bottom[2 * j], d = bottom[2 * j + 1];
        const std::int64_t o = i * w2 + j;
        ll[o] = T(0.5) * (a + b + c + d);
        hl[o] = T(0.5) * (a - b + c - d);
        lh[o] = T(0.5) * (a + b - c - d);
        hh[o] = T(0.5) * (a - b - c + d);
      }
    }
  }
}

template <typename T>
void haar_synthesis(std::int64_t batch, std::int64_t channels,
                    std::int64_t height, std::int64_t width, const T* f, T* x) {
  const std::int64_t h2 = height / 2;
  const std::int64_t w2 = width / 2;
  const std::int64_t planes = batch * channels;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    T* dst = x + p * height * width;
    const T* ll = f + p * 4 * h2 * w2;
    const T* hl = ll + h2 * w2;
    const T* lh = hl + h2 * w2;
    const T* hh = lh + h2 * w2;
    for (std::int64_t i = 0; i < h2; ++i) {
      T* top = dst + 2 * i * width;
      T* bottom = top + width;
      for (std::int64_t j = 0; j < w2; ++j) {
        const std::int64_t o = i * w2 + j;
        top[2 * j] = T(0.5) * (ll[o] + hl[o] + lh[o] + hh[o]);
        top[2 * j + 1] = T(0.5) * (ll[o] - hl[o] + lh[o] - hh[o]);
        bottom[2 * j] = T(0.5) * (ll[o] + hl[o] - lh[o] - hh[o]);
        bottom[2 * j + 1] = T(0.5) * (ll[o] - hl[o] - lh[o] + hh[o]);
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b,
                    T* y) {
  const std::int64_t ho = g.out_height();
  const std::int64_t wo = g.out_width();
  const std::int64_t k = g.kernel;
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < ho; ++oy) {
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          T acc = b ? b[o] : T(0);
          for (std::int64_t c = 0; c < g.in_channels; ++c) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t iy = oy * g.stride - g.pad + ky;
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += w[((o * g.in_channels + c) * k + ky) * k + kx] *
                       x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
            }
          }
          y[((n * g.out_channels + o) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db) {
  const std::int64_t ho = g.out_height();
  const std::int64_t wo = g.out_width();
  const std::int64_t k = g.kernel;
  if (dx) std::fill(dx, dx + g.batch * g.in_channels * g.height * g.width, T(0));
  if (dw) std::fill(dw, dw + g.out_channels * g.patch_size(), T(0));
  if (db) std::fill(db, db + g.out_channels, T(0));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < ho; ++oy) {
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          const T grad = dy[((n * g.out_channels + o) * ho + oy) * wo + ox];
          if (db) db[o] += grad;
          for (std::int64_t c = 0; c < g.in_channels; ++c) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const std::int64_t iy = oy * g.stride - g.pad + ky;
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                const std::int64_t wi = ((o * g.in_channels + c) * k + ky) * k + kx;
                const std::int64_t xi =
                    ((n * g.in_channels + c) * g.height + iy) * g.width + ix;
                if (dw) dw[wi] += grad * x[xi];
                if (dx) dx[xi] += grad * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void separable_filter_reflect(std::int64_t planes, std::int64_t height,
                              std::int64_t width, std::span<const T> taps,
                              const T* x, T* y) {
  const auto r = static_cast<std::int64_t>(taps.size() / 2);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x + p * height * width;
    for (std::int64_t i = 0; i < height; ++i) {
      for (std::int64_t j = 0; j < width; ++j) {
        T acc = 0;
        for (std::int64_t u = -r; u <= r; ++u) {
          for (std::int64_t v = -r; v <= r; ++v) {
            acc += taps[u + r] * taps[v + r] *
                   src[reflect_index(i + u, height) * width + reflect_index(j + v, width)];
          }
        }
        y[p * height * width + i * width + j] = acc;
      }
    }
  }
}

template <typename T>
void haar_analysis(std::int64_t batch, std::int64_t channels,
                   std::int64_t height, std::int64_t width, const T* x, T* f) {
  // Rows: LL, HL, LH, HH; columns: block pixels a, b, c, d.
  static constexpr int kSigns[4][4] = {
      {1, 1, 1, 1}, {1, -1, 1, -1}, {1, 1, -1, -1}, {1, -1, -1, 1}};
  const std::int64_t h2 = height / 2;
  const std::int64_t w2 = width / 2;
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* src = x + (n * channels + c) * height * width;
      for (std::int64_t i = 0; i < h2; ++i) {
        for (std::int64_t j = 0; j < w2; ++j) {
          const T block[4] = {src[2 * i * width + 2 * j], src[2 * i * width + 2 * j + 1],
                              src[(2 * i + 1) * width + 2 * j],
                              src[(2 * i + 1) * width + 2 * j + 1]};
          for (int band = 0; band < 4; ++band) {
            T acc = 0;
            for (int q = 0; q < 4; ++q) acc += T(kSigns[band][q]) * block[q];
            f[(((n * channels + c) * 4 + band) * h2 + i) * w2 + j] = acc / T(2);
          }
        }
      }
    }
  }
}

}  // namespace reference

#define INVMARK_INSTANTIATE_KERNELS(T)                                              \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*,         \
                                  const T*, T*);                                   \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*,        \
                                   const T*, T*, T*, T*);                          \
  template void separable_filter_reflect<T>(std::int64_t, std::int64_t,            \
                                            std::int64_t, std::span<const T>,      \
                                            const T*, T*);                         \
  template void separable_filter_reflect_adjoint<T>(                               \
      std::int64_t, std::int64_t, std::int64_t, std::span<const T>, const T*, T*); \
  template void haar_analysis<T>(std::int64_t, std::int64_t, std::int64_t,         \
                                 std::int64_t, const T*, T*);                      \
  template void haar_synthesis<T>(std::int64_t, std::int64_t, std::int64_t,        \
                                  std::int64_t, const T*, T*);                     \
  template void reference::conv2d_forward<T>(const ConvGeometry&, const T*,        \
                                             const T*, const T*, T*);              \
  template void reference::conv2d_backward<T>(const ConvGeometry&, const T*,       \
                                              const T*, const T*, T*, T*, T*);     \
  template void reference::separable_filter_reflect<T>(                            \
      std::int64_t, std::int64_t, std::int64_t, std::span<const T>, const T*, T*); \
  template void reference::haar_analysis<T>(std::int64_t, std::int64_t,            \
                                            std::int64_t, std::int64_t, const T*,  \
                                            T*);

INVMARK_INSTANTIATE_KERNELS(float)
INVMARK_INSTANTIATE_KERNELS(double)

}  // namespace invmark::kernels
