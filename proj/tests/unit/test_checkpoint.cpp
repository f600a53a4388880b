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

#include "invmark/checkpoint.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "invmark/error.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

ModelConfig small_config(std::int64_t length = 4) {
  ModelConfig c;
  c.image_height = c.image_width = 16;
  c.message_length = length;
  c.inn_blocks = 2;
  c.dense_depth = 2;
  c.dense_growth = 4;
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = testing::temp_dir("ckpt");
  WatermarkModel<float> model(small_config(), 1, {InitMode::kDefault, InitMode::kDefault});
  NamedTensors<float> opt{{"step", Tensor<float>({1}, {3.0f})},
                          {"m.x", testing::random_tensor<float>({2, 2}, 2)}};
  save_checkpoint(dir / "a.ckpt", model, {{"step", 7}}, opt);

  WatermarkModel<float> other(small_config(), 99, {InitMode::kDefault, InitMode::kDefault});
  EXPECT_NE(parameter_bytes(other), parameter_bytes(model));
  const auto data = load_checkpoint(dir / "a.ckpt", other);
  EXPECT_EQ(parameter_bytes(other), parameter_bytes(model));
  EXPECT_EQ(data.meta.at("step"), 7);
  ASSERT_EQ(data.optimizer.size(), 2u);
  EXPECT_EQ(data.optimizer[1].first, "m.x");
  EXPECT_EQ(data.optimizer[1].second, opt[1].second);

  auto loaded = load_model<float>(dir / "a.ckpt");
  EXPECT_EQ(parameter_bytes(loaded), parameter_bytes(model));
  EXPECT_EQ(loaded.config(), model.config());
  EXPECT_EQ(checkpoint_scalar_size(dir / "a.ckpt"), 4u);
  EXPECT_EQ(read_checkpoint_meta(dir / "a.ckpt").at("step"), 7);

  WatermarkModel<double> wide(small_config(), 1);
  save_checkpoint(dir / "d.ckpt", wide);
  EXPECT_EQ(checkpoint_scalar_size(dir / "d.ckpt"), 8u);
  EXPECT_THROW(load_model<float>(dir / "d.ckpt"), ConfigError);
}

TEST(Checkpoint, DetectsCorruption) {
  const auto dir = testing::temp_dir("ckpt_bad");
  WatermarkModel<float> model(small_config(), 3);
  save_checkpoint(dir / "a.ckpt", model);
  auto bytes = read_bytes(dir / "a.ckpt");

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  write_bytes(dir / "b.ckpt", flipped);
  EXPECT_THROW(load_checkpoint(dir / "b.ckpt", model), DataError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 20);
  write_bytes(dir / "c.ckpt", truncated);
  EXPECT_THROW(load_checkpoint(dir / "c.ckpt", model), DataError);

  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(dir / "d.ckpt", magic);
  EXPECT_THROW(checkpoint_scalar_size(dir / "d.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt", model), DataError);
}

TEST(Checkpoint, RejectsDifferentModelConfig) {
  const auto dir = testing::temp_dir("ckpt_cfg");
  WatermarkModel<float> model(small_config(8), 4);
  save_checkpoint(dir / "a.ckpt", model);
  WatermarkModel<float> other(small_config(4), 4);
  EXPECT_THROW(load_checkpoint(dir / "a.ckpt", other), ConfigError);
}

TEST(Checkpoint, SerializationIsDeterministic) {
  CheckpointData<double> data;
  data.meta = {{"a", 1}};
  data.parameters.emplace_back("w", testing::random_tensor<double>({3, 2}, 5));
  const auto bytes = serialize_checkpoint(data);
  EXPECT_EQ(serialize_checkpoint(data), bytes);
  const auto back = deserialize_checkpoint<double>(bytes);
  EXPECT_EQ(back.meta, data.meta);
  EXPECT_EQ(back.parameters[0].second, data.parameters[0].second);
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), ConfigError);
}

}  // namespace
}  // namespace invmark
