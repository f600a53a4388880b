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

#include "invmark/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "invmark/error.hpp"
#include "invmark/image_io.hpp"
#include "invmark/objectives.hpp"

namespace invmark {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
Adam<T>::Adam(std::vector<std::pair<std::string, ag::Var<T>>> params, double learning_rate,
              double beta1, double beta2, double epsilon)
    : params_(std::move(params)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k].second;
    if (!p.has_grad()) continue;
    const Tensor<T>& g = p.grad();
    Tensor<T>& w = p.mutable_value();
    Tensor<T>& m = m_[k];
    Tensor<T>& v = v_[k];
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      const double gi = g[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] -= static_cast<T>(lr_ * (mi / c1) / (std::sqrt(vi / c2) + epsilon_));
    }
  }
  zero_grad();
}

template <typename T>
NamedTensors<T> Adam<T>::state() const {
  NamedTensors<T> out;
  out.emplace_back("step", Tensor<T>({1}, static_cast<T>(steps_)));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.emplace_back("m." + params_[k].first, m_[k]);
    out.emplace_back("v." + params_[k].first, v_[k]);
  }
  return out;
}

template <typename T>
void Adam<T>::load_state(const NamedTensors<T>& state) {
  if (state.size() != 1 + 2 * params_.size() || state[0].first != "step") {
    throw DataError("optimizer state does not match the model (" + std::to_string(state.size()) +
                    " tensors for " + std::to_string(params_.size()) + " parameters)");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& [mn, m] = state[1 + 2 * k];
    const auto& [vn, v] = state[2 + 2 * k];
    const auto& name = params_[k].first;
    if (mn != "m." + name || vn != "v." + name || m.shape() != params_[k].second.shape() ||
        v.shape() != params_[k].second.shape()) {
      throw DataError("optimizer state entry " + mn + " does not match parameter " + name);
    }
  }
  steps_ = static_cast<std::int64_t>(std::llround(static_cast<double>(state[0].second[0])));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    m_[k] = state[1 + 2 * k].second;
    v_[k] = state[2 + 2 * k].second;
  }
}

std::string log_record(const StepResult& r) {
  nlohmann::json j = {{"step", r.step},
                      {"l_en", r.loss_en},
                      {"l_de", r.loss_de},
                      {"l_ll", r.loss_ll},
                      {"l_total", r.loss_total},
                      {"ber", r.ber},
                      {"lr", r.learning_rate},
                      {"distortion", r.distortion.to_string()}};
  return j.dump();
}

template <typename T>
Trainer<T>::Trainer(TrainConfig config, WatermarkModel<T>& model)
    : config_(std::move(config)),
      model_(model),
      optimizer_(model.parameters(), config_.learning_rate, config_.adam_beta1,
                 config_.adam_beta2, config_.adam_epsilon) {
  config_.validate();
  if (!(config_.model == model.config())) {
    throw ConfigError("training config describes a different model than the one given");
  }
}

template <typename T>
StepDraw Trainer<T>::draw(std::size_t dataset_size) const {
  if (dataset_size == 0) throw DataError("cannot train on an empty dataset");
  std::mt19937_64 rng(mix_seed(config_.seed, static_cast<std::uint64_t>(step_)));
  StepDraw d;
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  if (batch <= dataset_size) {
    std::vector<std::size_t> all(dataset_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, dataset_size - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    d.indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(batch));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
    for (std::size_t i = 0; i < batch; ++i) d.indices.push_back(pick(rng));
  }
  for (std::size_t i = 0; i < batch; ++i) {
    d.messages.push_back(SecretMessage::random(config_.model.message_length, rng));
  }
  d.distortion = sample_combined(config_.distortions, rng);
  d.distortion_seed = rng();
  d.aux_seed = rng();
  return d;
}

template <typename T>
typename Trainer<T>::Forward Trainer<T>::forward(const Tensor<T>& images,
                                                 std::span<const SecretMessage> messages,
                                                 const DistortionSpec& distortion,
                                                 std::uint64_t distortion_seed,
                                                 std::uint64_t aux_seed) const {
  const Tensor<T> bits = message_batch<T>(messages);
  const auto encoded = model_.encode(images, ag::Var<T>::constant(bits));
  const auto noised = noise_layer(distortion, images, encoded.image, distortion_seed);
  const auto aux = sample_aux<T>(model_.aux_shape(images.dim(0)), aux_seed);
  Forward f;
  f.soft = model_.decode(noised, aux);
  f.loss_en = loss_en(images, encoded.image);
  f.loss_de = loss_de(bits, f.soft);
  f.loss_ll = loss_ll(images, encoded.image);
  f.loss_total = loss_total(f.loss_en, f.loss_de, f.loss_ll, config_.weights);
  return f;
}

namespace {

template <typename T>
nlohmann::json tensor_summary(const Tensor<T>& t) {
  std::int64_t nonfinite = 0;
  double m = 0.0;
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) {
      ++nonfinite;
    } else {
      m = std::max(m, std::abs(static_cast<double>(v)));
    }
  }
  return {{"max_abs", m}, {"nonfinite", nonfinite}};
}

}  // namespace

template <typename T>
StepResult Trainer<T>::train_step(const Tensor<T>& images,
                                  std::span<const SecretMessage> messages,
                                  const DistortionSpec& distortion,
                                  std::uint64_t distortion_seed, std::uint64_t aux_seed) {
  optimizer_.zero_grad();
  const Forward f = forward(images, messages, distortion, distortion_seed, aux_seed);
  StepResult r;
  r.step = step_ + 1;
  r.loss_en = f.loss_en.value()[0];
  r.loss_de = f.loss_de.value()[0];
  r.loss_ll = f.loss_ll.value()[0];
  r.loss_total = f.loss_total.value()[0];
  r.distortion = distortion;
  r.learning_rate = optimizer_.learning_rate();

  const auto soft = soft_messages(f.soft.value());
  double errors = 0.0;
  for (std::size_t i = 0; i < messages.size(); ++i) errors += ber(messages[i], soft[i]);
  r.ber = messages.empty() ? 0.0 : errors / static_cast<double>(messages.size());

  if (!std::isfinite(r.loss_total)) {
    nlohmann::json dump = {{"step", r.step},
                           {"l_en", r.loss_en},
                           {"l_de", r.loss_de},
                           {"l_ll", r.loss_ll},
                           {"distortion", distortion.to_string()},
                           {"input", tensor_summary(images)},
                           {"soft", tensor_summary(f.soft.value())}};
    nlohmann::json params = nlohmann::json::object();
    model_.visit([&](const std::string& name, ag::Var<T>& p) {
      params[name] = tensor_summary(p.value());
    });
    dump["parameters"] = params;
    std::string where;
    if (!dump_path_.empty()) {
      std::ofstream out(dump_path_);
      out << dump.dump(2) << "\n";
      where = "; state written to " + dump_path_.string();
    }
    std::ostringstream msg;
    msg << "non-finite loss at step " << r.step << " (L_en=" << r.loss_en
        << ", L_de=" << r.loss_de << ", L_LL=" << r.loss_ll << ", distortion "
        << distortion.to_string() << ")" << where;
    throw NumericalError(msg.str());
  }

  ag::backward(f.loss_total);
  optimizer_.step();
  ++step_;
  return r;
}

template <typename T>
StepResult Trainer<T>::train_step(const Dataset<T>& dataset) {
  const StepDraw d = draw(dataset.size());
  const Tensor<T> batch =
      stack_batch<T>(std::span<const Tensor<T>>(dataset.images), d.indices);
  return train_step(batch, d.messages, d.distortion, d.distortion_seed, d.aux_seed);
}

template <typename T>
void Trainer<T>::fit(const Dataset<T>& dataset, std::int64_t steps, std::ostream* log,
                     const std::function<void(const StepResult&)>& on_step) {
  for (std::int64_t i = 0; i < steps; ++i) {
    const StepResult r = train_step(dataset);
    const bool last = i + 1 == steps;
    if (log != nullptr &&
        (last || (config_.log_every > 0 && r.step % config_.log_every == 0))) {
      *log << log_record(r) << "\n";
      log->flush();
    }
    if (on_step) on_step(r);
    if (!checkpoint_path_.empty() && config_.checkpoint_every > 0 &&
        r.step % config_.checkpoint_every == 0) {
      save(checkpoint_path_);
    }
  }
}

template <typename T>
nlohmann::json Trainer<T>::state_meta() const {
  return {{"train", to_json(config_)}, {"step", step_}};
}

template <typename T>
void Trainer<T>::restore(const nlohmann::json& meta, const NamedTensors<T>& optimizer_state) {
  if (!meta.contains("step") || !meta.at("step").is_number_integer()) {
    throw DataError("checkpoint has no training step counter");
  }
  const auto step = meta.at("step").get<std::int64_t>();
  if (step < 0) throw DataError("checkpoint step counter is negative");
  if (!optimizer_state.empty()) optimizer_.load_state(optimizer_state);
  step_ = step;
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) {
  save_checkpoint(path, model_, state_meta(), optimizer_.state());
}

const EvalRow* MetricsReport::find(const DistortionSpec& d, double strength) const {
  for (const auto& row : rows) {
    if (row.distortion == d && std::abs(row.strength - strength) < 1e-12) return &row;
  }
  return nullptr;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = {{"distortion", row.distortion.to_string()},
                        {"strength", row.strength},
                        {"ber", row.ber},
                        {"ssim", row.ssim},
                        {"samples", row.samples}};
    if (std::isinf(row.psnr)) {
      j["psnr_db"] = "inf";
    } else {
      j["psnr_db"] = row.psnr;
    }
    out.push_back(std::move(j));
  }
  return {{"rows", out}};
}

namespace {

template <typename T>
Tensor<T> item(const Tensor<T>& batch, std::int64_t n) {
  const std::int64_t per = batch.numel() / batch.dim(0);
  Shape shape = batch.shape();
  shape[0] = 1;
  std::vector<T> data(batch.data() + n * per, batch.data() + (n + 1) * per);
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
MetricsReport evaluate(const WatermarkModel<T>& model, const Dataset<T>& dataset,
                       std::span<const DistortionSpec> distortions,
                       std::span<const double> strengths, const EvalOptions& options) {
  if (dataset.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  if (distortions.empty()) throw ConfigError("evaluation needs at least one distortion");
  if (strengths.empty()) throw ConfigError("evaluation needs at least one strength");
  if (options.batch_size < 1 || options.repeats < 1) {
    throw ConfigError("evaluation batch size and repeats must be positive");
  }
  for (const auto& d : distortions) d.validate();

  const std::size_t nd = distortions.size();
  const std::size_t ns = strengths.size();
  std::vector<double> ber_sum(nd * ns, 0.0);
  std::vector<double> psnr_sum(ns, 0.0);
  std::vector<double> ssim_sum(ns, 0.0);
  std::int64_t samples = 0;
  const auto n = dataset.size();
  const auto bs = static_cast<std::size_t>(options.batch_size);
  const std::int64_t length = model.config().message_length;

  std::uint64_t batch_index = 0;
  for (std::int64_t rep = 0; rep < options.repeats; ++rep) {
    for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
      std::vector<std::size_t> indices;
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) indices.push_back(i);
      const Tensor<T> cover =
          stack_batch<T>(std::span<const Tensor<T>>(dataset.images), indices);
      const std::uint64_t batch_seed = mix_seed(options.seed, batch_index);
      std::mt19937_64 rng(batch_seed);
      std::vector<SecretMessage> messages;
      for (std::size_t i = 0; i < indices.size(); ++i) {
        messages.push_back(SecretMessage::random(length, rng));
      }
      const Tensor<T> encoded = model.embed(cover, messages);
      samples += static_cast<std::int64_t>(indices.size());

      for (std::size_t s = 0; s < ns; ++s) {
        Tensor<T> stego = apply_strength(cover, encoded, strengths[s]);
        if (options.quantize) stego = quantize8(stego);
        for (std::size_t i = 0; i < indices.size(); ++i) {
          const auto a = item(cover, static_cast<std::int64_t>(i));
          const auto b = item(stego, static_cast<std::int64_t>(i));
          psnr_sum[s] += psnr(a, b);
          ssim_sum[s] += ssim(a, b);
        }
        for (std::size_t d = 0; d < nd; ++d) {
          const Tensor<T> attacked =
              apply_distortion(distortions[d], cover, stego, mix_seed(batch_seed, 2 * d + 1));
          const auto soft = model.extract(attacked, mix_seed(batch_seed, 2 * d + 2),
                                          options.zero_aux);
          for (std::size_t i = 0; i < indices.size(); ++i) {
            ber_sum[d * ns + s] += ber(messages[i], soft[i]);
          }
        }
      }
    }
  }

  MetricsReport report;
  const double count = static_cast<double>(samples);
  for (std::size_t d = 0; d < nd; ++d) {
    for (std::size_t s = 0; s < ns; ++s) {
      EvalRow row;
      row.distortion = distortions[d];
      row.strength = strengths[s];
      row.ber = ber_sum[d * ns + s] / count;
      row.psnr = psnr_sum[s] / count;
      row.ssim = ssim_sum[s] / count;
      row.samples = samples;
      report.rows.push_back(row);
    }
  }
  return report;
}

template class Adam<float>;
template class Adam<double>;
template class Trainer<float>;
template class Trainer<double>;
template MetricsReport evaluate<float>(const WatermarkModel<float>&, const Dataset<float>&,
                                       std::span<const DistortionSpec>, std::span<const double>,
                                       const EvalOptions&);
template MetricsReport evaluate<double>(const WatermarkModel<double>&, const Dataset<double>&,
                                        std::span<const DistortionSpec>,
                                        std::span<const double>, const EvalOptions&);

}  // namespace invmark
