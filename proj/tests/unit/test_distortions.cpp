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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "invmark/error.hpp"
#include "invmark/image_io.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

using testing::random_tensor;

TEST(DistortionSpec, ParsesAndPrints) {
  EXPECT_EQ(DistortionSpec::parse("identity"), DistortionSpec::identity());
  EXPECT_EQ(DistortionSpec::parse("dropout:0.3"), DistortionSpec::dropout(0.3));
  EXPECT_EQ(DistortionSpec::parse(" jpeg:50 "), DistortionSpec::jpeg(50));
  EXPECT_EQ(DistortionSpec::parse("gf:2.0").to_string(), "gf:2");
  EXPECT_EQ(DistortionSpec::parse("crop:0.035").to_string(), "crop:0.035");
  for (const char* bad : {"blur:1", "dropout", "dropout:1.5", "jpeg:0", "jpeg:50.5", "gf:-1",
                          "gf:abc", "identity:1", "crop:-0.1"}) {
    EXPECT_THROW(DistortionSpec::parse(bad), ConfigError) << bad;
  }
}

TEST(DistortionPool, ParsesCommaLists) {
  const auto pool =
      parse_distortion_pool("identity,cropout:0.3,dropout:0.3,crop:0.035,gf:2.0,jpeg:50");
  EXPECT_EQ(pool, combined_pool());
  EXPECT_EQ(parse_distortion_pool(format_distortion_pool(pool)), pool);
  EXPECT_THROW(parse_distortion_pool(""), ConfigError);
  EXPECT_THROW(parse_distortion_pool(" , "), ConfigError);
  EXPECT_TRUE(combined_pool()[5].kind == DistortionKind::kJpeg);
  EXPECT_FALSE(combined_pool()[5].differentiable());
  EXPECT_TRUE(combined_pool()[1].needs_cover());
}

TEST(Distortions, IdentityReturnsEncoded) {
  const auto cover = random_tensor<float>({2, 3, 8, 8}, 1, 0, 1);
  const auto enc = random_tensor<float>({2, 3, 8, 8}, 2, 0, 1);
  EXPECT_EQ(apply_distortion(DistortionSpec::identity(), cover, enc, 3), enc);
}

TEST(Distortions, DropoutExtremes) {
  const auto cover = random_tensor<float>({1, 3, 8, 8}, 4, 0, 1);
  const auto enc = random_tensor<float>({1, 3, 8, 8}, 5, 0, 1);
  EXPECT_EQ(apply_distortion(DistortionSpec::dropout(0.0), cover, enc, 6), enc);
  EXPECT_EQ(apply_distortion(DistortionSpec::dropout(1.0), cover, enc, 6), cover);
}

TEST(Distortions, DropoutMaskMeanAndChannelSharing) {
  const Tensor<double> cover({1, 3, 320, 320}, 0.0);
  const Tensor<double> enc({1, 3, 320, 320}, 1.0);
  const auto out = apply_distortion(DistortionSpec::dropout(0.3), cover, enc, 7);
  double replaced = 0.0;
  for (int i = 0; i < 320; ++i) {
    for (int j = 0; j < 320; ++j) {
      const double v = out.at(0, 0, i, j);
      EXPECT_EQ(out.at(0, 1, i, j), v);
      EXPECT_EQ(out.at(0, 2, i, j), v);
      replaced += 1.0 - v;
    }
  }
  EXPECT_NEAR(replaced / (320.0 * 320.0), 0.3, 0.02);  // > 1e5 pixels
}

std::int64_t count_equal(const Tensor<double>& out, double value) {
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < out.dim(2); ++i)
    for (std::int64_t j = 0; j < out.dim(3); ++j) n += out.at(0, 0, i, j) == value;
  return n;
}

TEST(Distortions, CropKeepsExactSquareAndPads) {
  EXPECT_EQ(crop_side(0.035, 128, 128), 23);
  const Tensor<double> cover({1, 3, 128, 128}, 0.0);
  const Tensor<double> enc({1, 3, 128, 128}, 0.9);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = apply_distortion(DistortionSpec::crop(0.035), cover, enc, seed);
    EXPECT_EQ(count_equal(out, 0.9), 529);
    EXPECT_EQ(count_equal(out, kCropPadValue), 128 * 128 - 529);
    EXPECT_EQ(out.shape(), enc.shape());
  }
  EXPECT_DOUBLE_EQ(kCropPadValue, 127.0 / 255.0);
}

TEST(Distortions, CropoutKeepsConfiguredRectangle) {
  const Tensor<double> cover({1, 1, 64, 64}, 0.0);
  const Tensor<double> enc({1, 1, 64, 64}, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = apply_distortion(DistortionSpec::cropout(0.3), cover, enc, seed);
    const auto kept = count_equal(out, 1.0);
    // The kept pixels form one rectangle whose area is within rounding of p*H*W.
    std::int64_t top = 64, bottom = -1, left = 64, right = -1;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j)
        if (out.at(0, 0, i, j) == 1.0) {
          top = std::min<std::int64_t>(top, i);
          bottom = std::max<std::int64_t>(bottom, i);
          left = std::min<std::int64_t>(left, j);
          right = std::max<std::int64_t>(right, j);
        }
    const auto rows = bottom - top + 1, cols = right - left + 1;
    EXPECT_EQ(kept, rows * cols);
    EXPECT_NEAR(static_cast<double>(kept), 0.3 * 64 * 64, 64.0);
    EXPECT_GE(static_cast<double>(rows) / cols, 0.45);
    EXPECT_LE(static_cast<double>(rows) / cols, 2.2);
  }
  const auto e = cropout_extent(0.3, 64, 64, 1.0);
  EXPECT_EQ(e.rows, 35);
  EXPECT_EQ(e.cols, 35);
  EXPECT_EQ(cropout_extent(0.0, 64, 64, 1.0).rows, 0);
  EXPECT_EQ(cropout_extent(1.0, 64, 64, 1.0).rows * cropout_extent(1.0, 64, 64, 1.0).cols,
            64 * 64);
}

TEST(Distortions, MasksAreSeededAndPerSample) {
  const auto cover = random_tensor<float>({2, 3, 16, 16}, 8, 0, 1);
  const auto enc = random_tensor<float>({2, 3, 16, 16}, 9, 0, 1);
  const auto spec = DistortionSpec::dropout(0.5);
  EXPECT_EQ(apply_distortion(spec, cover, enc, 10), apply_distortion(spec, cover, enc, 10));
  EXPECT_NE(apply_distortion(spec, cover, enc, 10), apply_distortion(spec, cover, enc, 11));
}

TEST(GaussianTaps, NormalizedWithDocumentedSize) {
  for (double sigma : {0.5, 1.0, 1.5, 2.0, 3.3}) {
    const auto taps = gaussian_taps<double>(sigma);
    EXPECT_EQ(taps.size(), static_cast<std::size_t>(2 * std::ceil(2 * sigma) + 1));
    double total = 0.0;
    for (double t : taps) total += t;
    EXPECT_NEAR(total, 1.0, 1e-6);
    // 2-D kernel (outer product) also sums to one.
    EXPECT_NEAR(total * total, 1.0, 1e-6);
  }
  EXPECT_EQ(gaussian_taps<float>(2.0).size(), 9u);
  EXPECT_THROW(gaussian_taps<float>(0.0), ConfigError);
}

TEST(Distortions, GaussianFilterKeepsConstantsAndIsLinear) {
  const Tensor<double> constant({1, 3, 12, 12}, 0.37);
  const auto out = apply_distortion(DistortionSpec::gaussian_filter(2.0), constant, constant, 1);
  EXPECT_LT(max_abs_diff(out, constant), 1e-12);

  const auto a = random_tensor<double>({1, 3, 12, 12}, 12);
  const auto b = random_tensor<double>({1, 3, 12, 12}, 13);
  Tensor<double> sum(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) sum[i] = a[i] + 2 * b[i];
  const auto spec = DistortionSpec::gaussian_filter(1.5);
  const auto fa = apply_distortion(spec, a, a, 0);
  const auto fb = apply_distortion(spec, b, b, 0);
  const auto fs = apply_distortion(spec, sum, sum, 0);
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(fs[i], fa[i] + 2 * fb[i], 1e-12);
}

TEST(Distortions, JpegHighQualityIsNearLossless) {
  const auto img = to_tensor<double>(read_image(std::string(INVMARK_TEST_DATA) + "/desk/img000.png"));
  const auto batch = img.reshaped({1, 3, 64, 64});
  const auto out = apply_distortion(DistortionSpec::jpeg(100), batch, batch, 0);
  double mad = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) mad += std::abs(out[i] - batch[i]);
  EXPECT_LT(mad / out.numel(), 0.02);
  const auto q50 = apply_distortion(DistortionSpec::jpeg(50), batch, batch, 0);
  double mad50 = 0.0;
  for (std::int64_t i = 0; i < out.numel(); ++i) mad50 += std::abs(q50[i] - batch[i]);
  EXPECT_GT(mad50, mad);
  for (double v : q50.values()) {
    EXPECT_EQ(v, std::round(v * 255.0) / 255.0);
  }
}

TEST(Distortions, DifferentiableOverloadRejectsJpeg) {
  const auto x = ag::Var<float>::constant(Tensor<float>({1, 3, 8, 8}));
  EXPECT_THROW(apply_distortion(DistortionSpec::jpeg(50), Tensor<float>({1, 3, 8, 8}), x, 0),
               ConfigError);
  EXPECT_THROW(apply_distortion(DistortionSpec::identity(), Tensor<float>({1, 3, 8, 4}), x, 0),
               DimensionError);
}

TEST(ForwardAsl, ValueEqualsAttackForEveryKind) {
  const auto cover = random_tensor<double>({2, 3, 16, 16}, 14, 0, 1);
  const auto enc = random_tensor<double>({2, 3, 16, 16}, 15, 0, 1);
  for (const auto& spec : combined_pool()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto v = forward_asl(spec, cover, ag::Var<double>::constant(enc), seed).value();
      EXPECT_EQ(v, apply_distortion(spec, cover, enc, seed)) << spec.to_string();
    }
  }
}

TEST(ForwardAsl, GradientIsIdentity) {
  const auto cover = random_tensor<double>({1, 3, 16, 16}, 16, 0, 1);
  auto enc = ag::Var<double>::parameter(random_tensor<double>({1, 3, 16, 16}, 17, 0, 1));
  const auto w = random_tensor<double>({1, 3, 16, 16}, 18);
  ag::backward(ag::dot(forward_asl(DistortionSpec::jpeg(50), cover, enc, 0), w));
  const auto through_asl = enc.grad();
  enc.zero_grad();
  ag::backward(ag::dot(enc, w));
  EXPECT_EQ(through_asl, enc.grad());
}

TEST(NoiseLayer, RoutesByDifferentiability) {
  const auto cover = random_tensor<double>({1, 3, 16, 16}, 19, 0, 1);
  auto enc = ag::Var<double>::parameter(random_tensor<double>({1, 3, 16, 16}, 20, 0, 1));
  const auto w = random_tensor<double>({1, 3, 16, 16}, 21);
  // Dropout routes through the mask, so the replaced pixels get no gradient.
  ag::backward(ag::dot(noise_layer(DistortionSpec::dropout(0.5), cover, enc, 3), w));
  std::int64_t zeros = 0;
  for (double g : enc.grad().values()) zeros += g == 0.0;
  EXPECT_GT(zeros, 0);
  enc.zero_grad();
  ag::backward(ag::dot(noise_layer(DistortionSpec::jpeg(50), cover, enc, 3), w));
  EXPECT_EQ(enc.grad(), w);
}

TEST(SampleCombined, UniformOverThePool) {
  const auto pool = combined_pool();
  std::mt19937_64 rng(22);
  std::map<std::string, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[sample_combined(pool, rng).to_string()];
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0.0;
  const double expect = draws / 6.0;
  for (const auto& [name, c] : counts) chi2 += (c - expect) * (c - expect) / expect;
  EXPECT_LT(chi2, 20.52);  // chi-square, 5 dof, p = 0.001

  std::vector<DistortionSpec> single{DistortionSpec::gaussian_filter(2.0)};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_combined(single, rng), single[0]);
  std::vector<DistortionSpec> empty;
  EXPECT_THROW(sample_combined(empty, rng), ConfigError);

  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_combined(pool, a), sample_combined(pool, b));
}

}  // namespace
}  // namespace invmark
