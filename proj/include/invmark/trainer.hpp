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

// Optimization loop and evaluation sweeps.

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "invmark/checkpoint.hpp"
#include "invmark/config.hpp"
#include "invmark/dataset.hpp"
#include "invmark/distortions.hpp"
#include "invmark/model.hpp"

namespace invmark {

// splitmix64 finalizer; derives independent stream seeds from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

template <typename T>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, ag::Var<T>>> params, double learning_rate,
       double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // Applies one update from the accumulated gradients, then clears them.
  // Parameters without a gradient are left untouched.
  void step();
  void zero_grad();

  std::int64_t steps_taken() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  // Moments as named tensors ("m.<param>", "v.<param>") plus "step".
  NamedTensors<T> state() const;
  void load_state(const NamedTensors<T>& state);

 private:
  std::vector<std::pair<std::string, ag::Var<T>>> params_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::int64_t steps_ = 0;
};

struct StepResult {
  std::int64_t step = 0;
  double loss_en = 0.0;
  double loss_de = 0.0;
  double loss_ll = 0.0;
  double loss_total = 0.0;
  double ber = 0.0;  // on the training batch, after the distortion
  DistortionSpec distortion;
  double learning_rate = 0.0;
};

// One JSON object per line: step, losses, lr, distortion drawn.
std::string log_record(const StepResult& r);

// Everything drawn for one step, derived from (seed, step).
struct StepDraw {
  std::vector<std::size_t> indices;
  std::vector<SecretMessage> messages;
  DistortionSpec distortion;
  std::uint64_t distortion_seed = 0;
  std::uint64_t aux_seed = 0;
};

template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig config, WatermarkModel<T>& model);

  const TrainConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  Adam<T>& optimizer() { return optimizer_; }

  // Draws the batch, messages and distortion for the next step.
  StepDraw draw(std::size_t dataset_size) const;

  // Forward pass (encode -> noise -> decode), losses and gradients, without
  // the parameter update. The returned value of L_total is a graph root.
  struct Forward {
    ag::Var<T> loss_en, loss_de, loss_ll, loss_total;
    ag::Var<T> soft;
  };
  Forward forward(const Tensor<T>& images, std::span<const SecretMessage> messages,
                  const DistortionSpec& distortion, std::uint64_t distortion_seed,
                  std::uint64_t aux_seed) const;

  // One optimization step on an explicit batch. Throws NumericalError on a
  // non-finite loss (after writing a diagnostic dump if a dump path is set).
  StepResult train_step(const Tensor<T>& images, std::span<const SecretMessage> messages,
                        const DistortionSpec& distortion, std::uint64_t distortion_seed,
                        std::uint64_t aux_seed);
  // One step with the batch drawn from `dataset`.
  StepResult train_step(const Dataset<T>& dataset);

  // Runs `steps` steps; writes a log record every log_every steps (only the
  // last one when log_every is 0) to `log` when non-null; `on_step` sees every result.
  void fit(const Dataset<T>& dataset, std::int64_t steps, std::ostream* log = nullptr,
           const std::function<void(const StepResult&)>& on_step = {});

  // Resume support: step counter and optimizer moments.
  nlohmann::json state_meta() const;
  void restore(const nlohmann::json& meta, const NamedTensors<T>& optimizer_state);
  void save(const std::filesystem::path& path);

  // Where a diagnostic JSON is written before a NumericalError is thrown.
  void set_dump_path(std::filesystem::path path) { dump_path_ = std::move(path); }
  // fit() saves here every checkpoint_every steps when set.
  void set_checkpoint_path(std::filesystem::path path) { checkpoint_path_ = std::move(path); }

 private:
  TrainConfig config_;
  WatermarkModel<T>& model_;
  Adam<T> optimizer_;
  std::int64_t step_ = 0;
  std::filesystem::path dump_path_;
  std::filesystem::path checkpoint_path_;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  bool zero_aux = false;
  std::int64_t batch_size = 16;
  // Fresh messages (and aux draws) per image.
  std::int64_t repeats = 1;
  // Quantize the strength-adjusted encoded image to 8 bits before attacking
  // it, as when it is stored as PNG.
  bool quantize = true;
};

struct EvalRow {
  DistortionSpec distortion;
  double strength = 1.0;
  double ber = 0.0;
  double psnr = 0.0;  // encoded vs cover, +inf when identical
  double ssim = 0.0;
  std::int64_t samples = 0;
};

struct MetricsReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(const DistortionSpec& d, double strength) const;
  nlohmann::json to_json() const;
};

template <typename T>
MetricsReport evaluate(const WatermarkModel<T>& model, const Dataset<T>& dataset,
                       std::span<const DistortionSpec> distortions,
                       std::span<const double> strengths, const EvalOptions& options);

}  // namespace invmark
