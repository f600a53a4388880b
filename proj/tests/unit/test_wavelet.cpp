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

#include <gtest/gtest.h>

#include "invmark/autograd.hpp"
#include "invmark/error.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

using testing::random_tensor;

// Rows: LL, HL, LH, HH; columns: a, b, c, d of the block [[a, b], [c, d]].
constexpr double kHaar[4][4] = {
    {0.5, 0.5, 0.5, 0.5},
    {0.5, -0.5, 0.5, -0.5},
    {0.5, 0.5, -0.5, -0.5},
    {0.5, -0.5, -0.5, 0.5},
};

TEST(HaarDwt, TwoByTwoMatchesMatrixOracle) {
  const Tensor<double> x({1, 2, 2}, {1, 2, 3, 4});
  const auto f = haar_dwt(x);
  ASSERT_EQ(f.shape(), (Shape{4, 1, 1}));
  for (int r = 0; r < 4; ++r) {
    double expect = 0.0;
    for (int c = 0; c < 4; ++c) expect += kHaar[r][c] * x[c];
    EXPECT_DOUBLE_EQ(f[r], expect);
  }
  EXPECT_DOUBLE_EQ(f[0], 5.0);
  EXPECT_DOUBLE_EQ(f[1], -1.0);
  EXPECT_DOUBLE_EQ(f[2], -2.0);
  EXPECT_DOUBLE_EQ(f[3], 0.0);
}

TEST(HaarDwt, MatchesMatrixOracleOnEveryBlock) {
  const auto x = random_tensor<double>({2, 3, 6, 8}, 1);
  const auto f = haar_dwt(x);
  ASSERT_EQ(f.shape(), (Shape{2, 12, 3, 4}));
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
          const double px[4] = {x.at(n, c, 2 * i, 2 * j), x.at(n, c, 2 * i, 2 * j + 1),
                                x.at(n, c, 2 * i + 1, 2 * j), x.at(n, c, 2 * i + 1, 2 * j + 1)};
          for (int r = 0; r < 4; ++r) {
            double expect = 0.0;
            for (int k = 0; k < 4; ++k) expect += kHaar[r][k] * px[k];
            EXPECT_NEAR(f.at(n, 4 * c + r, i, j), expect, 1e-14);
          }
        }
      }
    }
  }
}

TEST(HaarDwt, ConstantImageHasOnlyLowPass) {
  const Tensor<float> x({3, 4, 6}, 0.25f);
  const auto f = haar_dwt(x);
  for (int c = 0; c < 12; ++c) {
    for (int i = 0; i < 6; ++i) {
      EXPECT_FLOAT_EQ(f[c * 6 + i], c % 4 == 0 ? 0.5f : 0.0f);
    }
  }
}

TEST(HaarIwt, InvertsTheMatrixOracle) {
  const Tensor<double> f({4, 1, 1}, {5, -1, -2, 0});
  const auto x = haar_iwt(f);
  ASSERT_EQ(x.shape(), (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
  EXPECT_DOUBLE_EQ(x[2], 3.0);
  EXPECT_DOUBLE_EQ(x[3], 4.0);
}

TEST(HaarIwt, ZeroFeaturesGiveZeroImage) {
  const auto x = haar_iwt(Tensor<float>({2, 8, 3, 3}));
  for (float v : x.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Haar, RoundTripsAndPreservesEnergy) {
  for (const Shape& s : {Shape{3, 2, 2}, Shape{1, 3, 64, 64}, Shape{2, 1, 10, 4}}) {
    const auto x = random_tensor<float>(s, 2, 0.0, 1.0);
    const auto f = haar_dwt(x);
    EXPECT_LT(max_abs_diff(haar_iwt(f), x), 1e-6f);
    EXPECT_LT(max_abs_diff(haar_dwt(haar_iwt(f)), f), 1e-6f);
    double ex = 0.0, ef = 0.0;
    for (float v : x.values()) ex += double(v) * v;
    for (float v : f.values()) ef += double(v) * v;
    EXPECT_NEAR(ef, ex, 1e-5 * ex);
  }
}

TEST(Haar, IsLinear) {
  const auto x = random_tensor<double>({3, 8, 8}, 3);
  const auto y = random_tensor<double>({3, 8, 8}, 4);
  Tensor<double> combo(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) combo[i] = 2.5 * x[i] - 0.75 * y[i];
  const auto fx = haar_dwt(x), fy = haar_dwt(y), fc = haar_dwt(combo);
  for (std::int64_t i = 0; i < fc.numel(); ++i) {
    EXPECT_NEAR(fc[i], 2.5 * fx[i] - 0.75 * fy[i], 1e-12);
  }
}

TEST(Haar, RejectsBadShapes) {
  EXPECT_THROW(haar_dwt(Tensor<float>({1, 3, 4})), DimensionError);
  EXPECT_THROW(haar_dwt(Tensor<float>({1, 4, 5})), DimensionError);
  EXPECT_THROW(haar_iwt(Tensor<float>({3, 2, 2})), DimensionError);
  EXPECT_THROW(haar_iwt(Tensor<float>({1, 6, 2, 2})), DimensionError);
  EXPECT_THROW(haar_dwt(Tensor<float>({4, 4})), DimensionError);
}

TEST(ExtractLl, SelectsLowPassChannels) {
  EXPECT_DOUBLE_EQ(extract_ll(Tensor<double>({1, 2, 2}, {1, 2, 3, 4}))[0], 5.0);
  const auto x = random_tensor<double>({2, 3, 6, 4}, 5);
  const auto f = haar_dwt(x);
  const auto ll = extract_ll(x);
  ASSERT_EQ(ll.shape(), (Shape{2, 3, 3, 2}));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_EQ(ll.at(n, c, i, j), f.at(n, 4 * c, i, j));
  const auto constant = extract_ll(Tensor<double>({3, 4, 4}, 0.3));
  for (double v : constant.values()) EXPECT_DOUBLE_EQ(v, 0.6);
}

TEST(Haar, GraphOpsMatchTensorOpsAndFiniteDifferences) {
  auto x = ag::Var<double>::parameter(random_tensor<double>({1, 2, 4, 4}, 6));
  const auto weights = random_tensor<double>({1, 8, 2, 2}, 7);
  EXPECT_EQ(ag::haar_dwt(x).value(), haar_dwt(x.value()));
  const auto loss = [&] { return ag::dot(ag::haar_dwt(x), weights); };
  for (std::int64_t i = 0; i < x.value().numel(); ++i) {
    const auto c = testing::check_gradient(x, i, loss);
    EXPECT_NEAR(c.analytic, c.numeric, 1e-4 * std::max(1.0, std::abs(c.numeric)));
  }
  auto f = ag::Var<double>::parameter(random_tensor<double>({1, 8, 2, 2}, 8));
  const auto w2 = random_tensor<double>({1, 2, 4, 4}, 9);
  const auto inv = [&] { return ag::dot(ag::haar_iwt(f), w2); };
  for (std::int64_t i = 0; i < f.value().numel(); ++i) {
    EXPECT_TRUE(testing::check_gradient(f, i, inv).ok);
  }
}

}  // namespace
}  // namespace invmark
