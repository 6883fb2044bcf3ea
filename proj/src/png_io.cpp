// Copyright 2026 The comrp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "comrp/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "comrp/error.hpp"

namespace comrp {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

struct PngReader {
  png_image image{};
  PngReader() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngReader() { png_image_free(&image); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

std::vector<std::uint8_t> encode(const std::uint8_t* data, std::uint32_t w, std::uint32_t h,
                                 png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  PngReader r;
  if (!png_image_begin_read_from_memory(&r.image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + r.image.message);
  }
  r.image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = r.image.width;
  out.height = r.image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(r.image));
  if (!png_image_finish_read(&r.image, nullptr, out.pixels.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + r.image.message);
  }
  return out;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  spill(path, encode_png_rgb(image));
}

std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image) {
  return encode(image.pixels.data(), image.width, image.height, PNG_FORMAT_RGB);
}

GrayImage decode_png_gray(const std::vector<std::uint8_t>& bytes) {
  PngReader r;
  if (!png_image_begin_read_from_memory(&r.image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png decode failed: ") + r.image.message);
  }
  if (r.image.format != PNG_FORMAT_GRAY) {
    throw BadDepth("label PNG must be single-channel 8-bit (format flags " +
                   std::to_string(r.image.format) + ")");
  }
  GrayImage out;
  out.width = r.image.width;
  out.height = r.image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(r.image));
  if (!png_image_finish_read(&r.image, nullptr, out.pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("png decode failed: ") + r.image.message);
  }
  return out;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  try {
    return decode_png_gray(slurp(path));
  } catch (const BadDepth& e) {
    throw BadDepth(path.string() + ": " + e.what());
  }
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  spill(path, encode_png_gray(image));
}

std::vector<std::uint8_t> encode_png_gray(const GrayImage& image) {
  return encode(image.pixels.data(), image.width, image.height, PNG_FORMAT_GRAY);
}

}  // namespace comrp
