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

#include "invmark/autograd.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "invmark/distortions.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

using ag::Var;
using testing::check_gradient;
using testing::random_tensor;

// Checks every element of `param` against central differences of
// dot(op(), weights) with fixed random weights.
void check_all(Var<double> param, const std::function<Var<double>()>& op,
               std::uint64_t seed = 99) {
  const auto weights = random_tensor<double>(op().shape(), seed);
  const auto loss = [&] { return ag::dot(op(), weights); };
  for (std::int64_t i = 0; i < param.value().numel(); ++i) {
    const auto c = check_gradient(param, i, loss);
    EXPECT_TRUE(c.ok) << "element " << i << ": analytic " << c.analytic << " numeric "
                      << c.numeric;
  }
}

Var<double> param(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return Var<double>::parameter(random_tensor<double>(s, seed, lo, hi));
}

TEST(Autograd, ElementwiseOps) {
  auto a = param({2, 3}, 1);
  auto b = param({2, 3}, 2);
  check_all(a, [&] { return ag::add(a, b); });
  check_all(b, [&] { return ag::sub(a, b); });
  check_all(a, [&] { return ag::mul(a, b); });
  check_all(b, [&] { return ag::mul(a, b); });
  check_all(a, [&] { return ag::mul(a, a); });
  check_all(a, [&] { return ag::scale(a, 3.5); });
  check_all(a, [&] { return ag::exp(a); });
  check_all(a, [&] { return ag::sigmoid(a); });
  check_all(a, [&] { return ag::leaky_relu(a, 0.2); });
  check_all(a, [&] { return ag::clamp(a, -0.5, 0.5); });
}

TEST(Autograd, ClampPassesNoGradientOutsideRange) {
  auto a = Var<double>::parameter(Tensor<double>({3}, {-2.0, 0.1, 2.0}));
  ag::backward(ag::sum(ag::clamp(a, -1.0, 1.0)));
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(a.grad()[1], 1.0);
  EXPECT_EQ(a.grad()[2], 0.0);
}

TEST(Autograd, ShapeOps) {
  auto a = param({2, 3, 2, 2}, 3);
  auto b = param({2, 1, 2, 2}, 4);
  check_all(a, [&] { return ag::reshape(a, {2, 12}); });
  check_all(b, [&] {
    std::vector<Var<double>> parts{a, b, a};
    return ag::concat_channels<double>(parts);
  });
  check_all(a, [&] { return ag::upsample_nearest2x(a); });
  check_all(a, [&] { return ag::global_avg_pool(a); });
  auto s = param({2, 3}, 5);
  check_all(a, [&] { return ag::channel_scale(a, s); });
  check_all(s, [&] { return ag::channel_scale(a, s); });
}

TEST(Autograd, Conv2dAllInputs) {
  for (std::int64_t stride : {1, 2}) {
    auto x = param({2, 3, 6, 5}, 6);
    auto w = param({4, 3, 3, 3}, 7);
    auto b = param({4}, 8);
    const auto op = [&] { return ag::conv2d(x, w, b, stride, std::int64_t{1}); };
    check_all(x, op);
    check_all(w, op);
    check_all(b, op);
  }
}

TEST(Autograd, Linear) {
  auto x = param({3, 5}, 9);
  auto w = param({4, 5}, 10);
  auto b = param({4}, 11);
  const auto op = [&] { return ag::linear(x, w, b); };
  check_all(x, op);
  check_all(w, op);
  check_all(b, op);
}

TEST(Autograd, HaarAndLowPass) {
  auto x = param({1, 2, 4, 6}, 12);
  check_all(x, [&] { return ag::haar_dwt(x); });
  check_all(x, [&] { return ag::ll_band(ag::haar_dwt(x)); });
  auto f = param({1, 8, 2, 3}, 13);
  check_all(f, [&] { return ag::haar_iwt(f); });
}

TEST(Autograd, SeparableFilter) {
  auto x = param({1, 2, 7, 9}, 14);
  const auto taps = gaussian_taps<double>(1.0);
  check_all(x, [&] { return ag::separable_filter<double>(x, taps); });
}

TEST(Autograd, MaskedReplaceAndStraightThrough) {
  auto x = param({2, 2, 3, 3}, 15);
  Tensor<double> keep({2, 1, 3, 3});
  for (std::int64_t i = 0; i < keep.numel(); ++i) keep[i] = i % 3 == 0 ? 1.0 : 0.0;
  const auto fill = random_tensor<double>({2, 2, 3, 3}, 16);
  const auto out = ag::masked_replace(x, keep, fill);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          EXPECT_EQ(out.value().at(n, c, i, j),
                    keep.at(n, 0, i, j) != 0 ? x.value().at(n, c, i, j) : fill.at(n, c, i, j));
  check_all(x, [&] { return ag::masked_replace(x, keep, fill); });

  const auto target = random_tensor<double>({2, 2, 3, 3}, 17);
  x.zero_grad();
  const auto st = ag::straight_through(x, target);
  EXPECT_EQ(st.value(), target);
  const auto w = random_tensor<double>({2, 2, 3, 3}, 18);
  ag::backward(ag::dot(st, w));
  EXPECT_EQ(x.grad(), w);
}

TEST(Autograd, Reductions) {
  auto a = param({2, 3, 2}, 19);
  auto b = param({2, 3, 2}, 20);
  const auto mse = [&] { return ag::mse(a, b); };
  for (std::int64_t i = 0; i < 12; ++i) {
    EXPECT_TRUE(check_gradient(a, i, mse).ok);
    EXPECT_TRUE(check_gradient(b, i, mse).ok);
  }
  const auto s = [&] { return ag::sum(ag::mul(a, a)); };
  for (std::int64_t i = 0; i < 12; ++i) EXPECT_TRUE(check_gradient(a, i, s).ok);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  auto a = Var<double>::parameter(Tensor<double>({1}, {3.0}));
  const auto y = ag::mul(a, a);
  ag::backward(ag::add(y, ag::scale(y, 2.0)));  // 3a^2 -> 6a
  EXPECT_DOUBLE_EQ(a.grad()[0], 18.0);
  ag::backward(ag::sum(a));
  EXPECT_DOUBLE_EQ(a.grad()[0], 19.0);  // leaf gradients accumulate across calls
}

TEST(Autograd, NoGradGuardRecordsNoGraph) {
  auto a = param({2}, 21);
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    const auto y = ag::mul(a, a);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_TRUE(ag::mul(a, a).requires_grad());
}

TEST(Autograd, FloatOpsCompile) {
  auto a = Var<float>::parameter(random_tensor<float>({1, 1, 4, 4}, 22));
  auto w = Var<float>::parameter(random_tensor<float>({2, 1, 3, 3}, 23));
  auto b = Var<float>::parameter(Tensor<float>({2}));
  ag::backward(ag::sum(ag::leaky_relu(ag::conv2d(a, w, b, 1, 1), 0.2f)));
  EXPECT_TRUE(w.has_grad());
  EXPECT_TRUE(a.has_grad());
}

}  // namespace
}  // namespace invmark
