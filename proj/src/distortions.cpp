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

#include "invmark/distortions.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "invmark/image_io.hpp"

namespace invmark {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& text, const std::string& whole) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("distortion '" + whole + "': cannot parse parameter '" + text + "'");
  }
  return value;
}

template <typename T>
Tensor<T> as_batch(const Tensor<T>& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) return t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)});
  throw DimensionError("distortion input must be CHW or NCHW, got " + shape_string(t.shape()));
}

// keep mask [N,1,H,W]: 1 keeps the encoded pixel, 0 substitutes the fill.
template <typename T>
Tensor<T> draw_keep_mask(const DistortionSpec& spec, const Shape& s, std::mt19937_64& rng) {
  const std::int64_t batch = s[0], h = s[2], w = s[3];
  Tensor<T> keep({batch, 1, h, w}, T(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::int64_t n = 0; n < batch; ++n) {
    T* m = keep.data() + n * h * w;
    switch (spec.kind) {
      case DistortionKind::kDropout:
        for (std::int64_t i = 0; i < h * w; ++i) m[i] = unit(rng) < spec.param ? T(0) : T(1);
        break;
      case DistortionKind::kCropout:
      case DistortionKind::kCrop: {
        Extent e;
        if (spec.kind == DistortionKind::kCrop) {
          const std::int64_t side = crop_side(spec.param, h, w);
          e = {side, side};
        } else {
          std::uniform_real_distribution<double> log_aspect(std::log(0.5), std::log(2.0));
          e = cropout_extent(spec.param, h, w, std::exp(log_aspect(rng)));
        }
        if (e.rows == 0 || e.cols == 0) break;
        std::uniform_int_distribution<std::int64_t> top(0, h - e.rows);
        std::uniform_int_distribution<std::int64_t> left(0, w - e.cols);
        const std::int64_t y0 = top(rng);
        const std::int64_t x0 = left(rng);
        for (std::int64_t i = y0; i < y0 + e.rows; ++i) {
          std::fill(m + i * w + x0, m + i * w + x0 + e.cols, T(1));
        }
        break;
      }
      default:
        break;
    }
  }
  return keep;
}

template <typename T>
Tensor<T> jpeg_round_trip(const Tensor<T>& batch, int quality) {
  const auto& s = batch.shape();
  Tensor<T> out(s);
  const std::int64_t per = s[1] * s[2] * s[3];
  for (std::int64_t n = 0; n < s[0]; ++n) {
    Tensor<T> one({s[1], s[2], s[3]},
                  std::vector<T>(batch.data() + n * per, batch.data() + (n + 1) * per));
    const auto decoded = to_tensor<T>(decode_jpeg(encode_jpeg(to_image8(one), quality)));
    std::copy(decoded.data(), decoded.data() + per, out.data() + n * per);
  }
  return out;
}

}  // namespace

DistortionSpec DistortionSpec::parse(std::string_view text) {
  const std::string whole = trim(text);
  const auto colon = whole.find(':');
  const std::string name = whole.substr(0, colon);
  const bool has_param = colon != std::string::npos;
  const std::string arg = has_param ? trim(whole.substr(colon + 1)) : std::string();
  DistortionSpec spec;
  if (name == "identity") {
    if (has_param) throw ConfigError("distortion 'identity' takes no parameter");
    return spec;
  }
  if (name == "dropout") spec.kind = DistortionKind::kDropout;
  else if (name == "cropout") spec.kind = DistortionKind::kCropout;
  else if (name == "crop") spec.kind = DistortionKind::kCrop;
  else if (name == "gf") spec.kind = DistortionKind::kGaussianFilter;
  else if (name == "jpeg") spec.kind = DistortionKind::kJpeg;
  else throw ConfigError("unknown distortion '" + whole + "'");
  if (!has_param) throw ConfigError("distortion '" + whole + "' needs a parameter");
  spec.param = parse_number(arg, whole);
  spec.validate();
  return spec;
}

void DistortionSpec::validate() const {
  switch (kind) {
    case DistortionKind::kIdentity:
      return;
    case DistortionKind::kDropout:
    case DistortionKind::kCropout:
    case DistortionKind::kCrop:
      if (!(param >= 0.0 && param <= 1.0)) {
        throw ConfigError(to_string() + ": ratio must lie in [0,1]");
      }
      return;
    case DistortionKind::kGaussianFilter:
      if (!(param > 0.0) || !std::isfinite(param)) {
        throw ConfigError(to_string() + ": sigma must be positive");
      }
      return;
    case DistortionKind::kJpeg:
      if (!(param >= 1.0 && param <= 100.0) || param != std::floor(param)) {
        throw ConfigError(to_string() + ": quality must be an integer in [1,100]");
      }
      return;
  }
}

std::string DistortionSpec::to_string() const {
  std::ostringstream out;
  switch (kind) {
    case DistortionKind::kIdentity: return "identity";
    case DistortionKind::kDropout: out << "dropout:"; break;
    case DistortionKind::kCropout: out << "cropout:"; break;
    case DistortionKind::kCrop: out << "crop:"; break;
    case DistortionKind::kGaussianFilter: out << "gf:"; break;
    case DistortionKind::kJpeg: out << "jpeg:"; break;
  }
  out << param;
  return out.str();
}

std::vector<DistortionSpec> parse_distortion_pool(std::string_view text) {
  std::vector<DistortionSpec> pool;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos
                                                  ? std::string_view::npos
                                                  : comma - start));
    if (!item.empty()) pool.push_back(DistortionSpec::parse(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (pool.empty()) throw ConfigError("distortion pool is empty");
  return pool;
}

std::string format_distortion_pool(std::span<const DistortionSpec> pool) {
  std::string out;
  for (const auto& spec : pool) {
    if (!out.empty()) out += ',';
    out += spec.to_string();
  }
  return out;
}

std::vector<DistortionSpec> combined_pool() {
  return {DistortionSpec::identity(),         DistortionSpec::cropout(0.3),
          DistortionSpec::dropout(0.3),       DistortionSpec::crop(0.035),
          DistortionSpec::gaussian_filter(2.0), DistortionSpec::jpeg(50)};
}

std::int64_t crop_side(double p, std::int64_t height, std::int64_t width) {
  const auto side = static_cast<std::int64_t>(
      std::floor(std::sqrt(p * static_cast<double>(height * width))));
  return std::min({side, height, width});
}

Extent cropout_extent(double p, std::int64_t height, std::int64_t width, double aspect) {
  const double area = p * static_cast<double>(height * width);
  if (area < 0.5) return {};
  auto rows = static_cast<std::int64_t>(std::llround(std::sqrt(area * aspect)));
  rows = std::clamp<std::int64_t>(rows, 1, height);
  auto cols = static_cast<std::int64_t>(std::llround(area / static_cast<double>(rows)));
  cols = std::clamp<std::int64_t>(cols, 1, width);
  return {rows, cols};
}

template <typename T>
std::vector<T> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  const auto radius = static_cast<std::int64_t>(std::ceil(2.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    total += taps[i + radius];
  }
  std::vector<T> out;
  for (double t : taps) out.push_back(static_cast<T>(t / total));
  return out;
}

template <typename T>
ag::Var<T> apply_distortion(const DistortionSpec& spec, const Tensor<T>& cover,
                            const ag::Var<T>& encoded, std::uint64_t seed) {
  spec.validate();
  require_same_shape(cover.shape(), encoded.shape(), "distortion cover/encoded");
  if (encoded.shape().size() != 4) {
    throw DimensionError("distortion input must be NCHW, got " + shape_string(encoded.shape()));
  }
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case DistortionKind::kIdentity:
      return encoded;
    case DistortionKind::kDropout:
    case DistortionKind::kCropout:
      return ag::masked_replace(encoded, draw_keep_mask<T>(spec, encoded.shape(), rng), cover);
    case DistortionKind::kCrop:
      return ag::masked_replace(encoded, draw_keep_mask<T>(spec, encoded.shape(), rng),
                                Tensor<T>(encoded.shape(), static_cast<T>(kCropPadValue)));
    case DistortionKind::kGaussianFilter: {
      const auto taps = gaussian_taps<T>(spec.param);
      return ag::separable_filter<T>(encoded, taps);
    }
    case DistortionKind::kJpeg:
      break;
  }
  throw ConfigError(spec.to_string() + " is not differentiable; use forward_asl");
}

template <typename T>
Tensor<T> apply_distortion(const DistortionSpec& spec, const Tensor<T>& cover,
                           const Tensor<T>& encoded, std::uint64_t seed) {
  const auto batch_cover = as_batch(cover);
  const auto batch_encoded = as_batch(encoded);
  require_same_shape(batch_cover.shape(), batch_encoded.shape(), "distortion cover/encoded");
  Tensor<T> out;
  if (spec.kind == DistortionKind::kJpeg) {
    spec.validate();
    out = jpeg_round_trip(batch_encoded, static_cast<int>(spec.param));
  } else {
    ag::NoGradGuard guard;
    out = apply_distortion(spec, batch_cover, ag::Var<T>::constant(batch_encoded), seed).value();
  }
  return out.reshaped(encoded.shape());
}

template <typename T>
ag::Var<T> forward_asl(const DistortionSpec& spec, const Tensor<T>& cover,
                       const ag::Var<T>& encoded, std::uint64_t seed) {
  return ag::straight_through(encoded, apply_distortion(spec, cover, encoded.value(), seed));
}

template <typename T>
ag::Var<T> noise_layer(const DistortionSpec& spec, const Tensor<T>& cover,
                       const ag::Var<T>& encoded, std::uint64_t seed) {
  if (spec.differentiable()) return apply_distortion(spec, cover, encoded, seed);
  return forward_asl(spec, cover, encoded, seed);
}

const DistortionSpec& sample_combined(std::span<const DistortionSpec> pool,
                                      std::mt19937_64& rng) {
  if (pool.empty()) throw ConfigError("cannot sample from an empty distortion pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

#define INVMARK_INSTANTIATE_DISTORTIONS(T)                                             \
  template std::vector<T> gaussian_taps<T>(double);                                    \
  template Tensor<T> apply_distortion<T>(const DistortionSpec&, const Tensor<T>&,      \
                                         const Tensor<T>&, std::uint64_t);             \
  template ag::Var<T> apply_distortion<T>(const DistortionSpec&, const Tensor<T>&,     \
                                          const ag::Var<T>&, std::uint64_t);           \
  template ag::Var<T> forward_asl<T>(const DistortionSpec&, const Tensor<T>&,          \
                                     const ag::Var<T>&, std::uint64_t);                \
  template ag::Var<T> noise_layer<T>(const DistortionSpec&, const Tensor<T>&,          \
                                     const ag::Var<T>&, std::uint64_t);

INVMARK_INSTANTIATE_DISTORTIONS(float)
INVMARK_INSTANTIATE_DISTORTIONS(double)

}  // namespace invmark
