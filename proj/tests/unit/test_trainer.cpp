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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "invmark/error.hpp"
#include "invmark/objectives.hpp"
#include "test_util.hpp"

namespace invmark {
namespace {

using testing::random_tensor;

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.image_height = c.model.image_width = 16;
  c.model.message_length = 4;
  c.model.inn_blocks = 2;
  c.model.dense_depth = 2;
  c.model.dense_growth = 4;
  c.model.se_blocks = 1;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.log_every = 2;
  return c;
}

template <typename T>
Dataset<T> synthetic_dataset(std::size_t n, std::uint64_t seed) {
  Dataset<T> ds;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(random_tensor<T>({3, 16, 16}, seed + i, 0.0, 1.0));
    ds.files.emplace_back("synthetic" + std::to_string(i));
  }
  return ds;
}

const ModelInit kTrained{InitMode::kDefault, InitMode::kDefault};

TEST(MixSeed, SpreadsIndices) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(mix_seed(s, i));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(mix_seed(3, 9), mix_seed(3, 9));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto x = ag::Var<double>::parameter(Tensor<double>({2}, {1.0, -3.0}));
  Adam<double> opt({{"x", x}}, 0.01);
  ag::backward(ag::sum(ag::mul(x, x)));
  opt.step();
  const double x1 = x.value()[0];
  EXPECT_NEAR(x1, 0.99, 1e-9);
  EXPECT_NEAR(x.value()[1], -2.99, 1e-9);
  EXPECT_FALSE(x.has_grad() && x.grad()[0] != 0.0);
  EXPECT_EQ(opt.steps_taken(), 1);

  // A hand-rolled second step with the documented moment updates.
  const double g0 = 2.0, g1 = 2 * x1;
  const double m = 0.1 * 0.9 * g0 + 0.1 * g1;
  const double v = 0.999 * 0.001 * g0 * g0 + 0.001 * g1 * g1;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  ag::backward(ag::sum(ag::mul(x, x)));
  opt.step();
  EXPECT_NEAR(x.value()[0], x1 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);

  Adam<double> copy({{"x", x}}, 0.01);
  copy.load_state(opt.state());
  EXPECT_EQ(copy.steps_taken(), 2);
  EXPECT_THROW(copy.load_state({{"step", Tensor<double>({1}, {1.0})}}), DataError);
}

TEST(Trainer, ZeroInitStartsWithPerfectImages) {
  const auto cfg = tiny_config();
  WatermarkModel<float> model(cfg.model, 1);
  Trainer<float> trainer(cfg, model);
  const auto ds = synthetic_dataset<float>(4, 10);
  const auto d = trainer.draw(ds.size());
  const auto images = stack_batch<float>(ds.images, d.indices);
  const auto f = trainer.forward(images, d.messages, d.distortion, d.distortion_seed, d.aux_seed);
  EXPECT_EQ(f.loss_en.value()[0], 0.0f);
  EXPECT_EQ(f.loss_ll.value()[0], 0.0f);
  EXPECT_GT(f.loss_de.value()[0], 0.0f);
}

TEST(Trainer, DrawIsSeededAndWithoutReplacement) {
  auto cfg = tiny_config();
  cfg.batch_size = 5;
  cfg.distortions = combined_pool();
  WatermarkModel<float> model(cfg.model, 1);
  Trainer<float> a(cfg, model), b(cfg, model);
  const auto da = a.draw(8), db = b.draw(8);
  EXPECT_EQ(da.indices, db.indices);
  EXPECT_EQ(da.distortion, db.distortion);
  EXPECT_EQ(da.messages, db.messages);
  EXPECT_EQ(std::set<std::size_t>(da.indices.begin(), da.indices.end()).size(), 5u);
  for (auto i : da.indices) EXPECT_LT(i, 8u);
  EXPECT_EQ(a.draw(3).indices.size(), 5u);  // with replacement when the dataset is smaller
}

TEST(Trainer, GradientsOfTheTotalLossMatchFiniteDifferences) {
  auto cfg = tiny_config();
  WatermarkModel<double> model(cfg.model, 2, kTrained);
  Trainer<double> trainer(cfg, model);
  const auto images = random_tensor<double>({2, 3, 16, 16}, 3, 0.0, 1.0);
  std::mt19937_64 rng(4);
  const std::vector<SecretMessage> messages{SecretMessage::random(4, rng),
                                            SecretMessage::random(4, rng)};
  for (const auto& distortion : {DistortionSpec::identity(), DistortionSpec::dropout(0.3),
                                 DistortionSpec::jpeg(50)}) {
    const auto loss = [&] {
      return trainer.forward(images, messages, distortion, 5, 6).loss_total;
    };
    auto params = model.parameters();
    std::mt19937_64 pick(7);
    for (int t = 0; t < 20; ++t) {
      auto& [name, p] = params[pick() % params.size()];
      const auto i = static_cast<std::int64_t>(pick() % p.value().numel());
      if (distortion.kind == DistortionKind::kJpeg) {
        // The forward attack simulation is not the derivative of the attack,
        // so only check the analytic gradient is finite.
        p.zero_grad();
        ag::backward(loss());
        EXPECT_TRUE(std::isfinite(p.grad()[i])) << name;
        continue;
      }
      const auto r = testing::check_gradient(p, i, loss, 1e-5);
      EXPECT_TRUE(r.ok) << distortion.to_string() << " " << name << "[" << i << "] "
                        << r.analytic << " vs " << r.numeric;
    }
  }
}

TEST(Trainer, ResumeMatchesAnUninterruptedRun) {
  auto cfg = tiny_config();
  cfg.distortions = combined_pool();
  const auto ds = synthetic_dataset<float>(6, 20);
  const auto dir = testing::temp_dir("resume");

  WatermarkModel<float> straight(cfg.model, 8, kTrained);
  Trainer<float> t1(cfg, straight);
  t1.fit(ds, 6);
  EXPECT_EQ(t1.step(), 6);

  WatermarkModel<float> first(cfg.model, 8, kTrained);
  Trainer<float> t2(cfg, first);
  t2.fit(ds, 3);
  t2.save(dir / "half.ckpt");

  auto resumed = load_model<float>(dir / "half.ckpt");
  const auto data = load_checkpoint(dir / "half.ckpt", resumed);
  Trainer<float> t3(train_config_from_json(data.meta.at("train")), resumed);
  t3.restore(data.meta, data.optimizer);
  EXPECT_EQ(t3.step(), 3);
  t3.fit(ds, 3);
  EXPECT_EQ(t3.step(), 6);
  EXPECT_EQ(parameter_bytes(resumed), parameter_bytes(straight));
}

TEST(Trainer, ImageLossAloneDoesNotIncrease) {
  auto cfg = tiny_config();
  cfg.weights = {1.0, 0.0, 0.0};
  cfg.learning_rate = 1e-4;
  WatermarkModel<double> model(cfg.model, 9, kTrained);
  Trainer<double> trainer(cfg, model);
  const auto images = random_tensor<double>({2, 3, 16, 16}, 10, 0.0, 1.0);
  std::mt19937_64 rng(11);
  const std::vector<SecretMessage> messages{SecretMessage::random(4, rng),
                                            SecretMessage::random(4, rng)};
  double prev = trainer.train_step(images, messages, DistortionSpec::identity(), 0, 0).loss_en;
  const double start = prev;
  for (int i = 0; i < 15; ++i) {
    const double now =
        trainer.train_step(images, messages, DistortionSpec::identity(), 0, 0).loss_en;
    EXPECT_LE(now, prev * (1 + 1e-9));
    prev = now;
  }
  EXPECT_LT(prev, start);
}

TEST(Trainer, NonFiniteLossThrowsAndDumps) {
  auto cfg = tiny_config();
  WatermarkModel<float> model(cfg.model, 12, kTrained);
  model.parameters().front().second.mutable_value()[0] = std::nanf("");
  Trainer<float> trainer(cfg, model);
  const auto dir = testing::temp_dir("nonfinite");
  trainer.set_dump_path(dir / "dump.json");
  const auto ds = synthetic_dataset<float>(2, 13);
  EXPECT_THROW(trainer.train_step(ds), NumericalError);
  std::ifstream in(dir / "dump.json");
  ASSERT_TRUE(in.good());
  const auto dump = nlohmann::json::parse(in);
  EXPECT_TRUE(dump.contains("parameters"));
  EXPECT_EQ(trainer.step(), 0);
}

TEST(Trainer, LogRecords) {
  auto cfg = tiny_config();
  cfg.log_every = 2;
  WatermarkModel<float> model(cfg.model, 14);
  Trainer<float> trainer(cfg, model);
  const auto ds = synthetic_dataset<float>(4, 15);
  std::ostringstream log;
  int seen = 0;
  trainer.fit(ds, 5, &log, [&](const StepResult&) { ++seen; });
  EXPECT_EQ(seen, 5);
  std::istringstream lines(log.str());
  std::vector<nlohmann::json> records;
  for (std::string line; std::getline(lines, line);) records.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(records.size(), 3u);  // steps 2, 4 and the last
  for (const char* key : {"step", "l_en", "l_de", "l_ll", "l_total", "ber", "lr", "distortion"}) {
    EXPECT_TRUE(records[0].contains(key)) << key;
  }
  EXPECT_EQ(records.back().at("step"), 5);
  EXPECT_EQ(records[0].at("distortion"), "identity");
}

TEST(Evaluate, RowsCoverThePoolAndStrengths) {
  auto cfg = tiny_config();
  WatermarkModel<float> model(cfg.model, 16, kTrained);
  const auto ds = synthetic_dataset<float>(3, 17);
  const auto pool = combined_pool();
  const std::vector<double> strengths{0.5, 1.0, 2.0};
  EvalOptions opt;
  opt.quantize = false;
  const auto report = evaluate<float>(model, ds, pool, strengths, opt);
  ASSERT_EQ(report.rows.size(), pool.size() * strengths.size());
  EXPECT_EQ(report.rows[1].distortion, pool[0]);
  EXPECT_EQ(report.rows[1].strength, 1.0);
  for (const auto& d : pool) {
    const auto* a = report.find(d, 0.5);
    const auto* b = report.find(d, 1.0);
    const auto* c = report.find(d, 2.0);
    ASSERT_TRUE(a && b && c);
    EXPECT_GT(a->psnr, b->psnr);
    EXPECT_GT(b->psnr, c->psnr);
    EXPECT_EQ(a->samples, 3);
    EXPECT_GE(a->ber, 0.0);
    EXPECT_LE(a->ber, 1.0);
  }
  const auto j = report.to_json().at("rows");
  ASSERT_EQ(j.size(), report.rows.size());
  for (const char* key : {"distortion", "strength", "ber", "psnr_db", "ssim", "samples"}) {
    EXPECT_TRUE(j[0].contains(key)) << key;
  }
  EXPECT_EQ(evaluate<float>(model, ds, pool, strengths, opt).to_json().at("rows"), j);

  WatermarkModel<float> identity_model(cfg.model, 16);
  const auto same = evaluate<float>(identity_model, ds, pool, strengths, opt);
  EXPECT_EQ(same.rows[0].psnr, std::numeric_limits<double>::infinity());
  EXPECT_EQ(same.to_json().at("rows")[0].at("psnr_db"), "inf");
}

}  // namespace
}  // namespace invmark
