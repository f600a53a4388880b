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

// invmark: train, embed, extract, attack, evaluate.
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime or data
// error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "invmark/checkpoint.hpp"
#include "invmark/config.hpp"
#include "invmark/dataset.hpp"
#include "invmark/distortions.hpp"
#include "invmark/error.hpp"
#include "invmark/image_io.hpp"
#include "invmark/model.hpp"
#include "invmark/objectives.hpp"
#include "invmark/trainer.hpp"

namespace {

using namespace invmark;
namespace fs = std::filesystem;

bool is_jpeg_path(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".jpg" || ext == ".jpeg";
}

// Writes PNG, or JPEG (with a warning) when the extension asks for it.
void write_image(const fs::path& path, const Image8& image, int jpeg_quality) {
  if (is_jpeg_path(path)) {
    std::cerr << "warning: writing lossy JPEG to " << path.string()
              << "; the compression itself degrades the watermark\n";
    write_jpeg(path, image, jpeg_quality);
  } else {
    write_png(path, image);
  }
}

template <typename T>
Tensor<T> load_input(const fs::path& path, const ModelConfig& config, bool allow_resize) {
  Image8 image = read_image(path, config.channels);
  if (image.height != config.image_height || image.width != config.image_width) {
    if (!allow_resize) {
      throw DimensionError(path.string() + " is " + std::to_string(image.width) + "x" +
                           std::to_string(image.height) + ", the model expects " +
                           std::to_string(config.image_width) + "x" +
                           std::to_string(config.image_height) + " (pass --resize to rescale)");
    }
    std::cerr << "warning: resizing " << path.string() << " from " << image.width << "x"
              << image.height << " to " << config.image_width << "x" << config.image_height
              << "\n";
    image = resize(image, config.image_height, config.image_width);
  }
  return to_tensor<T>(image).reshaped({1, config.channels, config.image_height,
                                       config.image_width});
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  std::string log;
  std::string distortions;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
};

template <typename T>
int run_train(const TrainConfig& config, const TrainArgs& args) {
  WatermarkModel<T> model(config.model, config.seed);
  Trainer<T> trainer(config, model);
  if (!args.resume.empty()) {
    const auto data = load_checkpoint(args.resume, model);
    trainer.restore(data.meta, data.optimizer);
    std::cerr << "resuming from step " << trainer.step() << "\n";
  }
  DatasetOptions options;
  options.height = config.model.image_height;
  options.width = config.model.image_width;
  options.channels = config.model.channels;
  options.seed = config.seed;
  const auto dataset = ingest_dataset<T>(args.data, options);
  std::cerr << "training on " << dataset.size() << " images, " << model.parameter_count()
            << " parameters, distortions " << format_distortion_pool(config.distortions)
            << "\n";

  const fs::path log_path = args.log.empty() ? fs::path(args.out + ".log.jsonl") : fs::path(args.log);
  std::ofstream log(log_path, args.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot open log " + log_path.string());
  trainer.set_dump_path(args.out + ".nonfinite.json");
  trainer.set_checkpoint_path(args.out);
  const std::int64_t steps = args.steps.value_or(config.steps);
  trainer.fit(dataset, steps, &log, [&](const StepResult& r) {
    if (config.log_every > 0 && r.step % config.log_every == 0) {
      std::cout << log_record(r) << "\n" << std::flush;
    }
  });
  trainer.save(args.out);
  std::cerr << "wrote " << args.out << " at step " << trainer.step() << "\n";
  return 0;
}

int cmd_train(const TrainArgs& args) {
  TrainConfig config = load_train_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (!args.distortions.empty()) config.distortions = parse_distortion_pool(args.distortions);
  if (args.steps && *args.steps < 0) throw ConfigError("--steps must be non-negative");
  config.validate();
  if (!fs::is_directory(args.data)) throw DataError("data directory " + args.data + " not found");
  if (config.precision == Precision::kFloat64) return run_train<double>(config, args);
  return run_train<float>(config, args);
}

// ---------------------------------------------------------------- embed

struct EmbedArgs {
  std::string checkpoint;
  std::string input;
  std::string message;
  std::string out;
  double strength = 1.0;
  bool resize = false;
  int jpeg_quality = 95;
};

template <typename T>
int run_embed(const EmbedArgs& args) {
  const auto model = load_model<T>(args.checkpoint);
  const auto& config = model.config();
  const SecretMessage message = parse_message(args.message, config.message_length);
  const Tensor<T> cover = quantize8(load_input<T>(args.input, config, args.resize));
  const Tensor<T> encoded = model.embed(cover, std::span<const SecretMessage>(&message, 1));
  const Tensor<T> stego = quantize8(apply_strength(cover, encoded, args.strength));
  write_image(args.out, to_image8(stego), args.jpeg_quality);
  std::cout << "psnr " << format_db(psnr(cover, stego)) << "\n";
  std::cout << "ssim " << ssim(cover, stego) << "\n";
  return 0;
}

// -------------------------------------------------------------- extract

struct ExtractArgs {
  std::string checkpoint;
  std::string input;
  std::string message;
  std::uint64_t seed = 0;
  bool zero_aux = false;
  bool resize = false;
};

template <typename T>
int run_extract(const ExtractArgs& args) {
  const auto model = load_model<T>(args.checkpoint);
  const auto& config = model.config();
  const Tensor<T> image = load_input<T>(args.input, config, args.resize);
  const SoftMessage soft = model.extract(image, args.seed, args.zero_aux).front();
  std::cout << "bits " << harden(soft).to_bit_string() << "\n";
  std::ostringstream values;
  values.precision(4);
  for (std::size_t i = 0; i < soft.size(); ++i) values << (i ? " " : "") << soft.values[i];
  std::cout << "soft " << values.str() << "\n";
  if (!args.message.empty()) {
    const auto expected = parse_message(args.message, config.message_length);
    std::cout << "ber " << ber(expected, soft) << "\n";
  }
  return 0;
}

// --------------------------------------------------------------- attack

struct AttackArgs {
  std::string input;
  std::string distortion;
  std::string out;
  std::string cover;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& args) {
  const DistortionSpec spec = DistortionSpec::parse(args.distortion);
  if (spec.needs_cover() && args.cover.empty()) {
    throw ConfigError(spec.to_string() +
                      " substitutes cover pixels and requires --cover <original image>");
  }
  const Image8 input = read_image(args.input);
  const auto shape = Shape{1, input.channels, input.height, input.width};
  const Tensor<double> encoded = to_tensor<double>(input).reshaped(shape);
  Tensor<double> cover(shape);
  if (!args.cover.empty()) {
    const Image8 c = read_image(args.cover, input.channels);
    if (c.height != input.height || c.width != input.width) {
      throw DimensionError("cover " + args.cover + " differs in size from " + args.input);
    }
    cover = to_tensor<double>(c).reshaped(shape);
  }
  if (spec.kind == DistortionKind::kJpeg && is_jpeg_path(args.out)) {
    write_jpeg(args.out, input, static_cast<int>(spec.param));
    return 0;
  }
  const Tensor<double> attacked = apply_distortion(spec, cover, encoded, args.seed);
  write_image(args.out, to_image8(attacked), 95);
  return 0;
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string distortions;
  std::vector<double> strengths{1.0};
  std::string out;
  std::string csv;
  std::string plot;
  std::uint64_t seed = 0;
  std::int64_t repeats = 1;
  std::int64_t batch = 16;
  bool zero_aux = false;
};

void write_csv(const fs::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "distortion,strength,ber,psnr_db,ssim,samples\n";
  for (const auto& r : report.rows) {
    out << r.distortion.to_string() << "," << r.strength << "," << r.ber << ","
        << format_db(r.psnr) << "," << r.ssim << "," << r.samples << "\n";
  }
}

// Two panels, BER vs S and PSNR vs S, one line per distortion.
void write_plot(const fs::path& path, const MetricsReport& report) {
  std::vector<std::string> names;
  for (const auto& r : report.rows) {
    const auto n = r.distortion.to_string();
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  }
  double s_min = 1e300, s_max = -1e300, p_min = 1e300, p_max = -1e300;
  for (const auto& r : report.rows) {
    s_min = std::min(s_min, r.strength);
    s_max = std::max(s_max, r.strength);
    if (std::isfinite(r.psnr)) {
      p_min = std::min(p_min, r.psnr);
      p_max = std::max(p_max, r.psnr);
    }
  }
  if (s_max <= s_min) s_max = s_min + 1.0;
  if (!(p_max > p_min)) {
    p_min = std::isfinite(p_min) && p_min < 1e300 ? p_min - 1.0 : 0.0;
    p_max = p_min + 2.0;
  }
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double w = 360, h = 240, pad = 40;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * w + 160 << "\" height=\""
      << h + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int panel = 0; panel < 2; ++panel) {
    const double x0 = panel * w + pad;
    out << "<rect x=\"" << x0 << "\" y=\"10\" width=\"" << w - 2 * pad << "\" height=\""
        << h - 2 * pad << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << x0 << "\" y=\"" << h - 12 << "\">"
        << (panel == 0 ? "BER vs strength" : "PSNR (dB) vs strength") << "</text>\n";
    for (std::size_t k = 0; k < names.size(); ++k) {
      out << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" points=\"";
      for (const auto& r : report.rows) {
        if (r.distortion.to_string() != names[k]) continue;
        const double v = panel == 0 ? r.ber : r.psnr;
        if (!std::isfinite(v)) continue;
        const double fx = (r.strength - s_min) / (s_max - s_min);
        const double fy = panel == 0 ? v : (v - p_min) / (p_max - p_min);
        out << x0 + fx * (w - 2 * pad) << "," << 10 + (1.0 - fy) * (h - 2 * pad) << " ";
      }
      out << "\"/>\n";
    }
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << "<text x=\"" << 2 * w + 10 << "\" y=\"" << 24 + 16 * k << "\" fill=\""
        << colors[k % 6] << "\">" << names[k] << "</text>\n";
  }
  out << "</svg>\n";
}

template <typename T>
int run_evaluate(const EvaluateArgs& args) {
  const auto model = load_model<T>(args.checkpoint);
  const auto& config = model.config();
  const auto pool = args.distortions.empty() ? combined_pool()
                                             : parse_distortion_pool(args.distortions);
  DatasetOptions options;
  options.height = config.image_height;
  options.width = config.image_width;
  options.channels = config.channels;
  options.shuffle = false;
  const auto dataset = ingest_dataset<T>(args.data, options);
  EvalOptions eval;
  eval.seed = args.seed;
  eval.zero_aux = args.zero_aux;
  eval.repeats = args.repeats;
  eval.batch_size = args.batch;
  const auto report = evaluate(model, dataset, pool, args.strengths, eval);
  const std::string text = report.to_json().dump(2);
  if (args.out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(args.out);
    if (!out) throw DataError("cannot write " + args.out);
    out << text << "\n";
  }
  if (!args.csv.empty()) write_csv(args.csv, report);
  if (!args.plot.empty()) write_plot(args.plot, report);
  return 0;
}

template <template <typename> class Fn, typename Args>
int dispatch(const std::string& checkpoint, const Args& args) {
  if (checkpoint_scalar_size(checkpoint) == 8) return Fn<double>::run(args);
  return Fn<float>::run(args);
}

template <typename T>
struct Embed {
  static int run(const EmbedArgs& a) { return run_embed<T>(a); }
};
template <typename T>
struct Extract {
  static int run(const ExtractArgs& a) { return run_extract<T>(a); }
};
template <typename T>
struct Evaluate {
  static int run(const EvaluateArgs& a) { return run_evaluate<T>(a); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trainable invertible-network image watermarking"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on an image directory");
  t->add_option("--config", train.config, "JSON training config")->required();
  t->add_option("--data", train.data, "Directory of PNG/JPEG training images")->required();
  t->add_option("--out", train.out, "Checkpoint to write")->required();
  t->add_option("--resume", train.resume, "Checkpoint to continue from");
  t->add_option("--log", train.log, "JSON-lines log (default <out>.log.jsonl)");
  t->add_option("--steps", train.steps, "Steps to run now (default: config steps)");
  t->add_option("--seed", train.seed, "Override the config seed");
  t->add_option("--distortions", train.distortions, "Override the distortion pool");

  EmbedArgs embed;
  auto* e = app.add_subcommand("embed", "Embed a message into an image");
  e->add_option("--checkpoint", embed.checkpoint)->required();
  e->add_option("--input", embed.input, "Cover image")->required();
  e->add_option("--message", embed.message, "Bits (0101...) or hex (0x...)")->required();
  e->add_option("--out", embed.out, "Encoded image (PNG)")->required();
  e->add_option("--strength", embed.strength, "Strength factor S")->capture_default_str();
  e->add_flag("--resize", embed.resize, "Rescale inputs of another size");
  e->add_option("--jpeg-quality", embed.jpeg_quality, "Quality when --out is .jpg")
      ->check(CLI::Range(1, 100));

  ExtractArgs extract;
  auto* x = app.add_subcommand("extract", "Recover the message from an image");
  x->add_option("--checkpoint", extract.checkpoint)->required();
  x->add_option("--input", extract.input)->required();
  x->add_option("--seed", extract.seed, "Seed of the auxiliary Gaussian draw");
  x->add_flag("--zero-aux", extract.zero_aux, "Use an all-zero auxiliary input");
  x->add_option("--message", extract.message, "Expected message; prints the BER");
  x->add_flag("--resize", extract.resize, "Rescale inputs of another size");

  AttackArgs attack;
  auto* a = app.add_subcommand("attack", "Apply one distortion to an image");
  a->add_option("--input", attack.input)->required();
  a->add_option("--distortions", attack.distortion, "One spec, e.g. jpeg:50")->required();
  a->add_option("--out", attack.out)->required();
  a->add_option("--cover", attack.cover, "Original image (dropout/cropout)");
  a->add_option("--seed", attack.seed);

  EvaluateArgs evaluate;
  auto* v = app.add_subcommand("evaluate", "BER/PSNR/SSIM per distortion and strength");
  v->add_option("--checkpoint", evaluate.checkpoint)->required();
  v->add_option("--data", evaluate.data, "Directory of test images")->required();
  v->add_option("--distortions", evaluate.distortions, "Pool (default: combined pool)");
  v->add_option("--strength", evaluate.strengths, "Strength factors")->delimiter(',');
  v->add_option("--out", evaluate.out, "Report path (default stdout)");
  v->add_option("--csv", evaluate.csv, "Also write the table as CSV");
  v->add_option("--plot", evaluate.plot, "Also write BER/PSNR vs S curves as SVG");
  v->add_option("--seed", evaluate.seed);
  v->add_option("--repeats", evaluate.repeats, "Message/aux draws per image")
      ->check(CLI::PositiveNumber);
  v->add_option("--batch", evaluate.batch)->check(CLI::PositiveNumber);
  v->add_flag("--zero-aux", evaluate.zero_aux);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return dispatch<Embed>(embed.checkpoint, embed);
    if (*x) return dispatch<Extract>(extract.checkpoint, extract);
    if (*a) return cmd_attack(attack);
    if (*v) return dispatch<Evaluate>(evaluate.checkpoint, evaluate);
  } catch (const DimensionError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 1;
}
