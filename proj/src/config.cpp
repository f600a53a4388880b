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

#include "invmark/config.hpp"

#include <fstream>
#include <set>

#include "invmark/message_codec.hpp"

namespace invmark {
namespace {

using nlohmann::json;

template <typename V>
V get(const json& j, const char* key, V fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void require_positive(std::int64_t v, const char* key) {
  if (v <= 0) throw ConfigError(std::string(key) + " must be positive, got " + std::to_string(v));
}

void reject_unknown(const json& j, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

const std::set<std::string> kModelKeys = {
    "image_size",  "image_height", "image_width",  "channels",     "message_length",
    "feature_channels", "upsample_stages", "se_blocks", "se_reduction", "inn_blocks",
    "dense_depth", "dense_growth", "sigmoid_scale"};

}  // namespace

std::string precision_name(Precision p) {
  return p == Precision::kFloat64 ? "float64" : "float32";
}

void ModelConfig::validate() const {
  require_positive(image_height, "image_height");
  require_positive(image_width, "image_width");
  if (image_height % 2 != 0 || image_width % 2 != 0) {
    throw ConfigError("image dims must be even, got " + std::to_string(image_height) + "x" +
                      std::to_string(image_width));
  }
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  require_positive(message_length, "message_length");
  if (feature_channels < 0) throw ConfigError("feature_channels must be >= 0");
  if (se_blocks < 0) throw ConfigError("se_blocks must be >= 0");
  require_positive(se_reduction, "se_reduction");
  require_positive(inn_blocks, "inn_blocks");
  require_positive(dense_depth, "dense_depth");
  require_positive(dense_growth, "dense_growth");
  if (!(sigmoid_scale > 0.0)) throw ConfigError("sigmoid_scale must be positive");
  resolve_geometry(*this);
}

void TrainConfig::validate() const {
  model.validate();
  require_positive(batch_size, "batch_size");
  require_positive(steps, "steps");
  require_positive(log_every, "log_every");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (distortions.empty()) throw ConfigError("distortion pool is empty");
  for (const auto& d : distortions) d.validate();
  if (weights.en < 0 || weights.de < 0 || weights.ll < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

json to_json(const ModelConfig& c) {
  return json{{"image_height", c.image_height},
              {"image_width", c.image_width},
              {"channels", c.channels},
              {"message_length", c.message_length},
              {"feature_channels", c.feature_channels},
              {"upsample_stages", c.upsample_stages},
              {"se_blocks", c.se_blocks},
              {"se_reduction", c.se_reduction},
              {"inn_blocks", c.inn_blocks},
              {"dense_depth", c.dense_depth},
              {"dense_growth", c.dense_growth},
              {"sigmoid_scale", c.sigmoid_scale}};
}

json to_json(const TrainConfig& c) {
  json j = to_json(c.model);
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["steps"] = c.steps;
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["distortions"] = format_distortion_pool(c.distortions);
  j["loss_weights"] = {{"en", c.weights.en}, {"de", c.weights.de}, {"ll", c.weights.ll}};
  j["seed"] = c.seed;
  j["precision"] = precision_name(c.precision);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, kModelKeys);
  ModelConfig c;
  const auto size = get<std::int64_t>(j, "image_size", 0);
  if (size > 0) c.image_height = c.image_width = size;
  c.image_height = get(j, "image_height", c.image_height);
  c.image_width = get(j, "image_width", c.image_width);
  c.channels = get(j, "channels", c.channels);
  c.message_length = get(j, "message_length", c.message_length);
  c.feature_channels = get(j, "feature_channels", c.feature_channels);
  c.upsample_stages = get(j, "upsample_stages", c.upsample_stages);
  c.se_blocks = get(j, "se_blocks", c.se_blocks);
  c.se_reduction = get(j, "se_reduction", c.se_reduction);
  c.inn_blocks = get(j, "inn_blocks", c.inn_blocks);
  c.dense_depth = get(j, "dense_depth", c.dense_depth);
  c.dense_growth = get(j, "dense_growth", c.dense_growth);
  c.sigmoid_scale = get(j, "sigmoid_scale", c.sigmoid_scale);
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  std::set<std::string> known = kModelKeys;
  for (const char* k : {"batch_size", "learning_rate", "adam_beta1", "adam_beta2",
                        "adam_epsilon", "steps", "log_every", "checkpoint_every",
                        "distortions", "loss_weights", "seed", "precision"}) {
    known.insert(k);
  }
  reject_unknown(j, known);
  json model_part = json::object();
  for (const auto& key : kModelKeys) {
    if (j.contains(key)) model_part[key] = j.at(key);
  }
  TrainConfig c;
  c.model = model_config_from_json(model_part);
  c.batch_size = get(j, "batch_size", c.batch_size);
  c.learning_rate = get(j, "learning_rate", c.learning_rate);
  c.adam_beta1 = get(j, "adam_beta1", c.adam_beta1);
  c.adam_beta2 = get(j, "adam_beta2", c.adam_beta2);
  c.adam_epsilon = get(j, "adam_epsilon", c.adam_epsilon);
  c.steps = get(j, "steps", c.steps);
  c.log_every = get(j, "log_every", c.log_every);
  c.checkpoint_every = get(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("distortions")) {
    c.distortions = parse_distortion_pool(get<std::string>(j, "distortions", ""));
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    reject_unknown(w, {"en", "de", "ll"});
    c.weights.en = get(w, "en", c.weights.en);
    c.weights.de = get(w, "de", c.weights.de);
    c.weights.ll = get(w, "ll", c.weights.ll);
  }
  c.seed = get(j, "seed", c.seed);
  const auto precision = get<std::string>(j, "precision", "float32");
  if (precision == "float32") {
    c.precision = Precision::kFloat32;
  } else if (precision == "float64") {
    c.precision = Precision::kFloat64;
  } else {
    throw ConfigError("precision must be 'float32' or 'float64', got '" + precision + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace invmark
