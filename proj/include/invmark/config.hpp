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

// Model and training configuration with a flat JSON file schema:
//
//   {
//     "image_size": 128,          // or "image_height" / "image_width"
//     "channels": 3,
//     "message_length": 30,
//     "feature_channels": 0,      // 0 = same as message_length
//     "upsample_stages": -1,      // -1 = derive from message length
//     "se_blocks": 3, "se_reduction": 8,
//     "inn_blocks": 16,
//     "dense_depth": 5, "dense_growth": 32,
//     "sigmoid_scale": 2.0,
//     "batch_size": 16, "learning_rate": 1e-5,
//     "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_epsilon": 1e-8,
//     "steps": 1000, "log_every": 10, "checkpoint_every": 0,
//     "distortions": "identity",
//     "loss_weights": {"en": 0.1, "de": 100.0, "ll": 0.1},
//     "seed": 0,
//     "precision": "float32"      // or "float64"
//   }
//
// Unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "invmark/distortions.hpp"
#include "json.hpp"

namespace invmark {

struct ModelConfig {
  std::int64_t image_height = 128;
  std::int64_t image_width = 128;
  std::int64_t channels = 3;
  std::int64_t message_length = 30;
  std::int64_t feature_channels = 0;
  std::int64_t upsample_stages = -1;
  std::int64_t se_blocks = 3;
  std::int64_t se_reduction = 8;
  std::int64_t inn_blocks = 16;
  std::int64_t dense_depth = 5;
  std::int64_t dense_growth = 32;
  double sigmoid_scale = 2.0;

  std::int64_t watermark_channels() const {
    return feature_channels > 0 ? feature_channels : message_length;
  }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LossWeights {
  double en = 0.1;
  double de = 100.0;
  double ll = 0.1;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

enum class Precision { kFloat32, kFloat64 };

struct TrainConfig {
  ModelConfig model;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::int64_t steps = 1000;
  std::int64_t log_every = 10;
  std::int64_t checkpoint_every = 0;
  std::vector<DistortionSpec> distortions{DistortionSpec::identity()};
  LossWeights weights;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);

// Throws ConfigError naming the offending key.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);

std::string precision_name(Precision p);

}  // namespace invmark
