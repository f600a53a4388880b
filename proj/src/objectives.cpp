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

#include "invmark/objectives.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "invmark/image_io.hpp"

namespace invmark {
namespace {

constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

template <typename T>
std::vector<double> to_255(const Tensor<T>& t) {
  std::vector<double> out(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    out[i] = std::round(std::clamp(static_cast<double>(t[i]), 0.0, 1.0) * 255.0);
  }
  return out;
}

std::vector<double> ssim_taps() {
  std::vector<double> taps(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter_valid(const double* plane, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& taps) {
  const std::int64_t k = static_cast<std::int64_t>(taps.size());
  const std::int64_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += taps[t] * plane[i * w + j + t];
      rows[i * ow + j] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t i = 0; i < oh; ++i) {
    for (std::int64_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += taps[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  }
  return out;
}

double ssim_plane(const double* x, const double* y, std::int64_t h, std::int64_t w) {
  static const auto taps = ssim_taps();
  const double c1 = std::pow(kSsimK1 * 255.0, 2);
  const double c2 = std::pow(kSsimK2 * 255.0, 2);
  std::vector<double> xx(h * w), yy(h * w), xy(h * w);
  for (std::int64_t i = 0; i < h * w; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, taps);
  const auto my = filter_valid(y, h, w, taps);
  const auto sxx = filter_valid(xx.data(), h, w, taps);
  const auto syy = filter_valid(yy.data(), h, w, taps);
  const auto sxy = filter_valid(xy.data(), h, w, taps);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

template <typename T>
ag::Var<T> loss_en(const Tensor<T>& cover, const ag::Var<T>& encoded) {
  return ag::mse(ag::Var<T>::constant(cover), encoded);
}

template <typename T>
ag::Var<T> loss_de(const Tensor<T>& bits, const ag::Var<T>& soft) {
  return ag::mse(ag::Var<T>::constant(bits), soft);
}

template <typename T>
ag::Var<T> loss_ll(const Tensor<T>& cover, const ag::Var<T>& encoded) {
  const auto cover_ll = ag::ll_band(ag::haar_dwt(ag::Var<T>::constant(cover)));
  return ag::mse(cover_ll, ag::ll_band(ag::haar_dwt(encoded)));
}

template <typename T>
ag::Var<T> loss_total(const ag::Var<T>& en, const ag::Var<T>& de, const ag::Var<T>& ll,
                      const LossWeights& weights) {
  return ag::add(ag::add(ag::scale(en, T(weights.en)), ag::scale(de, T(weights.de))),
                 ag::scale(ll, T(weights.ll)));
}

double loss_total(double en, double de, double ll, const LossWeights& weights) {
  return weights.en * en + weights.de * de + weights.ll * ll;
}

template <typename T>
Tensor<T> apply_strength(const Tensor<T>& cover, const Tensor<T>& encoded, double strength) {
  require_same_shape(cover.shape(), encoded.shape(), "apply_strength");
  if (!(strength >= 0.0)) throw ConfigError("strength factor must be non-negative");
  Tensor<T> out(cover.shape());
  const T s = static_cast<T>(strength);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = cover[i] + s * (encoded[i] - cover[i]);
  return out;
}

double ber(const SecretMessage& sent, const SecretMessage& received) {
  if (sent.size() != received.size() || sent.size() == 0) {
    throw ConfigError("ber: message lengths differ (" + std::to_string(sent.size()) + " vs " +
                      std::to_string(received.size()) + ")");
  }
  std::size_t errors = 0;
  for (std::size_t i = 0; i < sent.size(); ++i) errors += sent.bits[i] != received.bits[i];
  return static_cast<double>(errors) / static_cast<double>(sent.size());
}

double ber(const SecretMessage& sent, const SoftMessage& received) {
  return ber(sent, harden(received));
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  const auto x = to_255(a);
  const auto y = to_255(b);
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sse += (x[i] - y[i]) * (x[i] - y[i]);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(x.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

template <typename T>
double psnr_unquantized(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr_unquantized");
  double sse = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.numel()) / sse);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape& s = a.shape();
  if (s.size() != 3 && s.size() != 4) {
    throw DimensionError("ssim expects CHW or NCHW, got " + shape_string(s));
  }
  const std::int64_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h < kSsimWindow || w < kSsimWindow) {
    throw DimensionError("ssim needs images of at least 11x11, got " + shape_string(s));
  }
  const auto x = to_255(a);
  const auto y = to_255(b);
  const std::int64_t planes = a.numel() / (h * w);
  double total = 0.0;
  for (std::int64_t p = 0; p < planes; ++p) {
    total += ssim_plane(x.data() + p * h * w, y.data() + p * h * w, h, w);
  }
  return total / static_cast<double>(planes);
}

std::string format_db(double value) {
  if (std::isinf(value)) return "inf";
  std::ostringstream out;
  out << value;
  return out.str();
}

#define INVMARK_INSTANTIATE_OBJECTIVES(T)                                                  \
  template ag::Var<T> loss_en<T>(const Tensor<T>&, const ag::Var<T>&);                     \
  template ag::Var<T> loss_de<T>(const Tensor<T>&, const ag::Var<T>&);                     \
  template ag::Var<T> loss_ll<T>(const Tensor<T>&, const ag::Var<T>&);                     \
  template ag::Var<T> loss_total<T>(const ag::Var<T>&, const ag::Var<T>&, const ag::Var<T>&, \
                                    const LossWeights&);                                   \
  template Tensor<T> apply_strength<T>(const Tensor<T>&, const Tensor<T>&, double);        \
  template double psnr<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template double psnr_unquantized<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template double ssim<T>(const Tensor<T>&, const Tensor<T>&);

INVMARK_INSTANTIATE_OBJECTIVES(float)
INVMARK_INSTANTIATE_OBJECTIVES(double)

}  // namespace invmark
