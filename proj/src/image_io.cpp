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

#include "invmark/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "invmark/error.hpp"

namespace invmark {
namespace {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr) {}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::equal(kSig, kSig + 8, bytes.begin());
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

Image8 decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("corrupt PNG " + name + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.channels = gray ? 1 : 3;
  out.height = image.height;
  out.width = image.width;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("corrupt PNG " + name + ": " + image.message);
  }
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

Image8 decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = jpeg_silent;
  Image8 out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw DataError(std::string("corrupt JPEG: ") + err.message);
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = info.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&info);
  out.channels = info.output_components;
  out.height = info.output_height;
  out.width = info.output_width;
  out.pixels.resize(static_cast<std::size_t>(out.channels * out.height * out.width));
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(info.output_scanline) *
                                           out.width * out.channels;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality) {
  if (image.channels != 1 && image.channels != 3) {
    throw DimensionError("encode_jpeg: unsupported channel count " +
                         std::to_string(image.channels));
  }
  jpeg_compress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&info);
    std::free(buffer);
    throw DataError(std::string("JPEG encoding failed: ") + err.message);
  }
  jpeg_create_compress(&info);
  jpeg_mem_dest(&info, &buffer, &size);
  info.image_width = static_cast<JDIMENSION>(image.width);
  info.image_height = static_cast<JDIMENSION>(image.height);
  info.input_components = static_cast<int>(image.channels);
  info.in_color_space = image.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&info);
  jpeg_set_quality(&info, std::clamp(quality, 1, 100), TRUE);
  jpeg_start_compress(&info, TRUE);
  while (info.next_scanline < info.image_height) {
    auto* row = const_cast<JSAMPROW>(image.pixels.data() +
                                     static_cast<std::size_t>(info.next_scanline) *
                                         image.width * image.channels);
    jpeg_write_scanlines(&info, &row, 1);
  }
  jpeg_finish_compress(&info);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&info);
  std::free(buffer);
  return out;
}

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (is_png(bytes)) return decode_png(bytes, path.string());
  if (is_jpeg(bytes)) {
    try {
      return decode_jpeg(bytes);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  throw DataError("not a PNG or JPEG file: " + path.string());
}

Image8 read_image(const std::filesystem::path& path, std::int64_t channels) {
  return to_channels(read_image(path), channels);
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image info{};
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width);
  info.height = static_cast<png_uint_32>(image.height);
  info.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&info, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + info.message);
  }
}

void write_jpeg(const std::filesystem::path& path, const Image8& image, int quality) {
  const auto bytes = encode_jpeg(image, quality);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Image8 to_channels(const Image8& image, std::int64_t channels) {
  if (image.channels == channels) return image;
  Image8 out{channels, image.height, image.width, {}};
  const std::int64_t count = image.height * image.width;
  out.pixels.resize(static_cast<std::size_t>(count * channels));
  for (std::int64_t i = 0; i < count; ++i) {
    if (channels == 3) {
      std::fill_n(out.pixels.begin() + i * 3, 3, image.pixels[i]);
    } else {
      // ITU-R BT.601 luma.
      const auto* p = &image.pixels[i * 3];
      out.pixels[i] = to_byte(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
    }
  }
  return out;
}

Image8 resize(const Image8& image, std::int64_t height, std::int64_t width) {
  if (image.height == height && image.width == width) return image;
  Image8 src = image;
  // Repeated 2x box reduction keeps bilinear sampling from aliasing.
  while (src.height >= 4 * height && src.width >= 4 * width) {
    Image8 half{src.channels, src.height / 2, src.width / 2, {}};
    half.pixels.resize(static_cast<std::size_t>(half.channels * half.height * half.width));
    for (std::int64_t i = 0; i < half.height; ++i) {
      for (std::int64_t j = 0; j < half.width; ++j) {
        for (std::int64_t c = 0; c < src.channels; ++c) {
          auto at = [&](std::int64_t y, std::int64_t x) {
            return static_cast<int>(src.pixels[(y * src.width + x) * src.channels + c]);
          };
          const int s = at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) +
                        at(2 * i + 1, 2 * j + 1);
          half.pixels[(i * half.width + j) * half.channels + c] =
              static_cast<std::uint8_t>((s + 2) / 4);
        }
      }
    }
    src = std::move(half);
  }
  Image8 out{src.channels, height, width, {}};
  out.pixels.resize(static_cast<std::size_t>(out.channels * height * width));
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (std::int64_t i = 0; i < height; ++i) {
    const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
    const auto y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (std::int64_t j = 0; j < width; ++j) {
      const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
      const auto x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (std::int64_t c = 0; c < src.channels; ++c) {
        auto at = [&](std::int64_t y, std::int64_t x) {
          return static_cast<double>(src.pixels[(y * src.width + x) * src.channels + c]);
        };
        const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                         wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        out.pixels[(i * width + j) * out.channels + c] = to_byte(v);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Image8& image) {
  Tensor<T> out({image.channels, image.height, image.width});
  const std::int64_t area = image.height * image.width;
  for (std::int64_t c = 0; c < image.channels; ++c) {
    for (std::int64_t i = 0; i < area; ++i) {
      out[c * area + i] = static_cast<T>(image.pixels[i * image.channels + c]) / T(255);
    }
  }
  return out;
}

template <typename T>
Image8 to_image8(const Tensor<T>& chw) {
  const Shape& s = chw.shape();
  const bool batched = s.size() == 4;
  if (!(s.size() == 3 || (batched && s[0] == 1))) {
    throw DimensionError("to_image8: expected CHW or 1xCxHxW, got " + shape_string(s));
  }
  const std::int64_t c0 = batched ? 1 : 0;
  Image8 out{s[c0], s[c0 + 1], s[c0 + 2], {}};
  const std::int64_t area = out.height * out.width;
  out.pixels.resize(static_cast<std::size_t>(out.channels * area));
  for (std::int64_t c = 0; c < out.channels; ++c) {
    for (std::int64_t i = 0; i < area; ++i) {
      out.pixels[i * out.channels + c] =
          to_byte(std::clamp(static_cast<double>(chw[c * area + i]), 0.0, 1.0) * 255.0);
    }
  }
  return out;
}

template <typename T>
Tensor<T> quantize8(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(t[i]), 0.0, 1.0);
    out[i] = static_cast<T>(std::round(v * 255.0) / 255.0);
  }
  return out;
}

template Tensor<float> to_tensor<float>(const Image8&);
template Tensor<double> to_tensor<double>(const Image8&);
template Image8 to_image8<float>(const Tensor<float>&);
template Image8 to_image8<double>(const Tensor<double>&);
template Tensor<float> quantize8<float>(const Tensor<float>&);
template Tensor<double> quantize8<double>(const Tensor<double>&);

}  // namespace invmark
