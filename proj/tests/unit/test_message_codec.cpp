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

#include "invmark/message_codec.hpp"

#include <gtest/gtest.h>

#include "invmark/error.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

using testing::random_tensor;

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_height = 16;
  c.image_width = 16;
  c.message_length = 4;
  return c;
}

TEST(ParseMessage, BitStrings) {
  EXPECT_EQ(parse_message("1011", 4).bits, (std::vector<std::uint8_t>{1, 0, 1, 1}));
  EXPECT_THROW(parse_message("101", 4), ConfigError);
  EXPECT_THROW(parse_message("1021", 4), ConfigError);
  EXPECT_EQ(parse_message("0110", 4).to_bit_string(), "0110");
}

TEST(ParseMessage, Hex) {
  EXPECT_EQ(parse_message("0xA5", 8).to_bit_string(), "10100101");
  EXPECT_EQ(parse_message("0xffff", 16).to_bit_string(), "1111111111111111");
  // 30 bits take 8 digits; the two surplus leading bits must be zero.
  EXPECT_EQ(parse_message("0x3FFFFFFF", 30).to_bit_string(), std::string(30, '1'));
  EXPECT_THROW(parse_message("0x7FFFFFFF", 30), ConfigError);
  EXPECT_THROW(parse_message("0xFF", 16), ConfigError);
  EXPECT_THROW(parse_message("0xFFFFF", 16), ConfigError);
  EXPECT_THROW(parse_message("0xGG", 8), ConfigError);
}

TEST(Harden, ThresholdAtOneHalf) {
  EXPECT_EQ(harden({{0.9, 0.1, 0.49, 0.51}}).to_bit_string(), "1001");
  EXPECT_EQ(harden({{1.0, 0.0, 1.0}}).to_bit_string(), "101");
  EXPECT_EQ(harden({{0.5, 0.5}}).to_bit_string(), "11");
}

TEST(SecretMessage, RandomIsBinaryAndBalanced) {
  std::mt19937_64 rng(5);
  const auto m = SecretMessage::random(20000, rng);
  double ones = 0;
  for (auto b : m.bits) {
    ASSERT_LE(b, 1);
    ones += b;
  }
  EXPECT_NEAR(ones / 20000.0, 0.5, 0.02);
}

TEST(Geometry, DefaultSizes) {
  ModelConfig c;
  c.message_length = 64;
  auto g = resolve_geometry(c);
  EXPECT_EQ(g.expanded_length, 256);
  EXPECT_EQ(g.rows, 16);
  EXPECT_EQ(g.upsample_stages, 2);
  EXPECT_EQ(g.feature_channels, 64);
  EXPECT_EQ(expanded_length_for_layers(128, 128, 4), 256);

  c.message_length = 30;
  g = resolve_geometry(c);
  EXPECT_EQ(g.expanded_length, 256);  // smallest reachable L' >= 120
  EXPECT_EQ(g.feature_channels, 30);
}

TEST(Geometry, DeskAndTinySizes) {
  ModelConfig c;
  c.image_height = c.image_width = 64;
  c.message_length = 16;
  auto g = resolve_geometry(c);
  EXPECT_EQ(g.rows, 8);
  EXPECT_EQ(g.expanded_length, 64);
  EXPECT_EQ(g.upsample_stages, 2);

  g = resolve_geometry(tiny_config());
  EXPECT_EQ(g.rows, 4);
  EXPECT_EQ(g.upsample_stages, 1);
  EXPECT_EQ(g.expanded_length, 16);
}

TEST(Geometry, ExplicitStagesAndErrors) {
  ModelConfig c;
  c.image_height = c.image_width = 64;
  c.message_length = 16;
  c.upsample_stages = 0;
  EXPECT_EQ(resolve_geometry(c).expanded_length, 1024);
  c.upsample_stages = 6;
  EXPECT_THROW(resolve_geometry(c), ConfigError);
  c.upsample_stages = 4;  // 2x2 grid < 16 bits
  EXPECT_THROW(resolve_geometry(c), ConfigError);
  c.upsample_stages = -1;
  c.image_height = 48;
  c.image_width = 40;
  const auto g = resolve_geometry(c);
  EXPECT_EQ(g.rows * (1 << g.upsample_stages), 24);
  EXPECT_EQ(g.cols * (1 << g.upsample_stages), 20);
}

TEST(MessageBatch, RoundTripsAndValidates) {
  std::vector<SecretMessage> ms{parse_message("1010", 4), parse_message("0011", 4)};
  const auto t = message_batch<float>(ms);
  ASSERT_EQ(t.shape(), (Shape{2, 4}));
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[7], 1.0f);
  const auto soft = soft_messages(t);
  EXPECT_EQ(harden(soft[1]), ms[1]);
  ms.push_back(parse_message("101", 3));
  EXPECT_THROW(message_batch<float>(ms), ConfigError);
}

TEST(Processors, ShapesForSeveralConfigs) {
  for (auto [size, length] : {std::pair<int, int>{16, 4}, {64, 16}, {32, 8}}) {
    ModelConfig c;
    c.image_height = c.image_width = size;
    c.message_length = length;
    std::mt19937_64 rng(1);
    MessageProcessor<float> p(c, rng);
    InverseMessageProcessor<float> q(c, rng);
    auto m = ag::Var<float>::constant(random_tensor<float>({3, length}, 2, 0.0, 1.0));
    const auto f = p.expand(m);
    EXPECT_EQ(f.shape(), (Shape{3, length, size / 2, size / 2}));
    EXPECT_EQ(q.contract(f).shape(), (Shape{3, length}));
  }
  ModelConfig c;
  c.message_length = 64;
  std::mt19937_64 rng(1);
  MessageProcessor<float> p(c, rng);
  EXPECT_EQ(p.expand(ag::Var<float>::constant(Tensor<float>({1, 64}))).shape(),
            (Shape{1, 64, 64, 64}));
}

TEST(Processors, RejectWrongShapes) {
  const auto c = tiny_config();
  std::mt19937_64 rng(1);
  MessageProcessor<float> p(c, rng);
  InverseMessageProcessor<float> q(c, rng);
  EXPECT_THROW(p.expand(ag::Var<float>::constant(Tensor<float>({1, 5}))), ConfigError);
  EXPECT_THROW(q.contract(ag::Var<float>::constant(Tensor<float>({1, 4, 4, 8}))), ConfigError);
}

TEST(Processors, ZeroWeightsGiveSpatiallyConstantFeatures) {
  const auto c = tiny_config();
  std::mt19937_64 rng(3);
  MessageProcessor<double> p(c, rng);
  int k = 0;
  p.visit("p", [&](const std::string& name, ag::Var<double>& v) {
    const bool bias = name.size() > 4 && name.substr(name.size() - 4) == "bias";
    v.mutable_value().fill(bias ? 0.1 * (++k) : 0.0);
  });
  const auto f = p.expand(ag::Var<double>::constant(random_tensor<double>({2, 4}, 4))).value();
  for (int n = 0; n < 2; ++n)
    for (int ch = 0; ch < 4; ++ch)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(f.at(n, ch, i, j), f.at(0, ch, 0, 0));

  std::mt19937_64 rng2(3);
  MessageProcessor<double> zero(c, rng2, InitMode::kZero);
  InverseMessageProcessor<double> inv(c, rng2, InitMode::kZero);
  const auto z = zero.expand(ag::Var<double>::constant(random_tensor<double>({1, 4}, 5)));
  for (double v : z.value().values()) EXPECT_EQ(v, 0.0);
  const auto soft = inv.contract(ag::Var<double>::constant(Tensor<double>({1, 4, 8, 8})));
  for (double v : soft.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Processors, Deterministic) {
  const auto c = tiny_config();
  std::mt19937_64 r1(9), r2(9);
  MessageProcessor<float> a(c, r1), b(c, r2);
  const auto m = ag::Var<float>::constant(random_tensor<float>({2, 4}, 6, 0.0, 1.0));
  EXPECT_EQ(a.expand(m).value(), b.expand(m).value());
}

TEST(Processors, GradientsMatchFiniteDifferences) {
  const auto c = tiny_config();
  std::mt19937_64 rng(11);
  MessageProcessor<double> p(c, rng);
  InverseMessageProcessor<double> q(c, rng);
  const auto bits = random_tensor<double>({2, 4}, 12, 0.0, 1.0);
  const auto target = random_tensor<double>({2, 4}, 13, 0.0, 1.0);

  auto features = ag::Var<double>::parameter(random_tensor<double>({2, 4, 8, 8}, 14));
  const auto contract_loss = [&] {
    return ag::mse(q.contract(features), ag::Var<double>::constant(target));
  };
  std::mt19937_64 pick(15);
  for (int t = 0; t < 20; ++t) {
    const auto i = static_cast<std::int64_t>(pick() % features.value().numel());
    const auto r = testing::check_gradient(features, i, contract_loss);
    EXPECT_TRUE(r.ok) << "feature " << i << " " << r.analytic << " vs " << r.numeric;
  }

  std::vector<std::pair<std::string, ag::Var<double>>> params;
  p.visit("p", [&](const std::string& n, ag::Var<double>& v) { params.emplace_back(n, v); });
  q.visit("q", [&](const std::string& n, ag::Var<double>& v) { params.emplace_back(n, v); });
  const auto round_trip = [&] {
    return ag::mse(q.contract(p.expand(ag::Var<double>::constant(bits))),
                   ag::Var<double>::constant(target));
  };
  for (auto& [name, v] : params) {
    const auto i = static_cast<std::int64_t>(pick() % v.value().numel());
    const auto r = testing::check_gradient(v, i, round_trip);
    EXPECT_TRUE(r.ok) << name << "[" << i << "] " << r.analytic << " vs " << r.numeric;
  }
}

}  // namespace
}  // namespace invmark
