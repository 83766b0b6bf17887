// Copyright 2026 The Fidelity Eval Authors. All Rights Reserved.
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

#include "fidelity/raster.h"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "fidelity/error.h"

namespace fidelity::raster {
namespace {

constexpr std::array<uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G',
                                                  '\r', '\n', 0x1a, '\n'};

void CheckDimensions(int width, int height, size_t buffer, size_t per_pixel) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "image dimensions must be positive, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  const size_t expected = static_cast<size_t>(width) * height * per_pixel;
  if (buffer != expected) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample buffer holds " + std::to_string(buffer) +
                    " values, expected " + std::to_string(expected));
  }
}

struct PngImageDeleter {
  void operator()(png_image* image) const {
    png_image_free(image);
    delete image;
  }
};

RasterImage DecodePng(std::span<const uint8_t> bytes) {
  std::unique_ptr<png_image, PngImageDeleter> image(new png_image{});
  image->version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(image.get(), bytes.data(),
                                        bytes.size())) {
    throw Error(ErrorCode::kCorruptStream,
                std::string("PNG header: ") + image->message);
  }
  if (image->format & PNG_FORMAT_FLAG_ALPHA) {
    throw Error(ErrorCode::kUnsupportedFormat,
                "PNG with alpha channel is not supported");
  }
  if (image->format & PNG_FORMAT_FLAG_LINEAR) {
    throw Error(ErrorCode::kUnsupportedFormat,
                "16-bit PNG is not supported");
  }
  const int width = static_cast<int>(image->width);
  const int height = static_cast<int>(image->height);
  image->format = PNG_FORMAT_RGB;
  std::vector<uint8_t> samples(PNG_IMAGE_SIZE(*image));
  if (!png_image_finish_read(image.get(), nullptr, samples.data(), 0,
                             nullptr)) {
    throw Error(ErrorCode::kCorruptStream,
                std::string("PNG data: ") + image->message);
  }
  return RasterImage(width, height, std::move(samples));
}

class PpmReader {
 public:
  explicit PpmReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  int ReadHeaderInt() {
    SkipWhitespaceAndComments();
    int value = 0;
    size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1 << 24)) {
        throw Error(ErrorCode::kCorruptStream, "PPM header value too large");
      }
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      throw Error(ErrorCode::kCorruptStream, "malformed PPM header");
    }
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void SkipSingleWhitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorCode::kCorruptStream, "malformed PPM header");
    }
    ++pos_;
  }

  size_t position() const { return pos_; }
  void Seek(size_t pos) { pos_ = pos; }

 private:
  void SkipWhitespaceAndComments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

RasterImage DecodePpm(std::span<const uint8_t> bytes) {
  PpmReader reader(bytes);
  reader.Seek(2);
  const int width = reader.ReadHeaderInt();
  const int height = reader.ReadHeaderInt();
  const int maxval = reader.ReadHeaderInt();
  if (maxval != 255) {
    throw Error(ErrorCode::kUnsupportedFormat,
                "PPM maxval " + std::to_string(maxval) +
                    " is not supported (8-bit only)");
  }
  reader.SkipSingleWhitespace();
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kCorruptStream, "PPM has empty dimensions");
  }
  const size_t needed =
      static_cast<size_t>(width) * height * RasterImage::kChannels;
  const size_t start = reader.position();
  if (bytes.size() - start < needed) {
    throw Error(ErrorCode::kCorruptStream, "PPM raster is truncated");
  }
  std::vector<uint8_t> samples(bytes.begin() + start,
                               bytes.begin() + start + needed);
  return RasterImage(width, height, std::move(samples));
}

std::vector<uint8_t> ReadFile(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kNotFound, "no such image file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  }
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFile(const std::filesystem::path& path,
               std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  }
}

template <typename Image, typename Sample, int kPerPixel>
std::vector<Sample> CopyRect(const Image& image, const CropSpec& spec) {
  if (spec.width < 1 || spec.height < 1 || spec.origin_x < 0 ||
      spec.origin_y < 0 ||
      static_cast<long>(spec.origin_x) + spec.width > image.width() ||
      static_cast<long>(spec.origin_y) + spec.height > image.height()) {
    throw Error(ErrorCode::kOutOfBounds,
                "crop " + std::to_string(spec.width) + "x" +
                    std::to_string(spec.height) + "+" +
                    std::to_string(spec.origin_x) + "+" +
                    std::to_string(spec.origin_y) + " exceeds " +
                    std::to_string(image.width()) + "x" +
                    std::to_string(image.height()) + " image");
  }
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(spec.width) * spec.height * kPerPixel);
  const auto src = image.samples();
  for (int y = spec.origin_y; y < spec.origin_y + spec.height; ++y) {
    const size_t row = (static_cast<size_t>(y) * image.width() +
                        spec.origin_x) * kPerPixel;
    out.insert(out.end(), src.begin() + row,
               src.begin() + row + static_cast<size_t>(spec.width) * kPerPixel);
  }
  return out;
}

}  // namespace

RasterImage::RasterImage(int width, int height, std::vector<uint8_t> samples)
    : width_(width), height_(height), samples_(std::move(samples)) {
  CheckDimensions(width_, height_, samples_.size(), kChannels);
}

LumaImage::LumaImage(int width, int height, std::vector<double> samples)
    : width_(width), height_(height), samples_(std::move(samples)) {
  CheckDimensions(width_, height_, samples_.size(), 1);
  for (double v : samples_) {
    if (!(v >= 0.0 && v <= 255.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "luma sample outside [0, 255]: " + std::to_string(v));
    }
  }
}

RasterImage DecodeImage(std::span<const uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return DecodePpm(bytes);
  }
  const size_t sig = std::min(bytes.size(), kPngSignature.size());
  if (sig > 0 && std::equal(bytes.begin(), bytes.begin() + sig,
                            kPngSignature.begin())) {
    if (sig < kPngSignature.size()) {
      throw Error(ErrorCode::kCorruptStream, "PNG signature is truncated");
    }
    return DecodePng(bytes);
  }
  throw Error(ErrorCode::kUnsupportedFormat,
              "unrecognized image format (expected PNG or binary PPM)");
}

RasterImage LoadImage(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = ReadFile(path);
  try {
    return DecodeImage(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<uint8_t> EncodePng(const RasterImage& image) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIoFailure, "PNG encoder allocation failed");
  }
  std::vector<uint8_t> out;
  std::vector<png_bytep> rows(static_cast<size_t>(image.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure, "PNG encode failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t length) {
        auto* buffer = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(p));
        buffer->insert(buffer->end(), data, data + length);
      },
      nullptr);
  // Stimuli and fixtures are written often and are mostly noise-like, where
  // higher zlib levels cost a lot of time for little size.
  png_set_compression_level(png, 1);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  const size_t stride = static_cast<size_t>(image.width()) *
                        RasterImage::kChannels;
  for (int y = 0; y < image.height(); ++y) {
    rows[y] = const_cast<png_bytep>(image.samples().data() + y * stride);
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void SavePng(const RasterImage& image, const std::filesystem::path& path) {
  WriteFile(path, EncodePng(image));
}

void SavePpm(const RasterImage& image, const std::filesystem::path& path) {
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), image.samples().begin(), image.samples().end());
  WriteFile(path, bytes);
}

LumaImage ToLuma(const RasterImage& image, LumaMatrix matrix) {
  double kr = 0.2126, kg = 0.7152, kb = 0.0722;
  if (matrix == LumaMatrix::kBt601) {
    kr = 0.299;
    kg = 0.587;
    kb = 0.114;
  }
  const auto src = image.samples();
  std::vector<double> luma(static_cast<size_t>(image.width()) *
                           image.height());
  for (size_t i = 0; i < luma.size(); ++i) {
    const double y = kr * src[3 * i] + kg * src[3 * i + 1] +
                     kb * src[3 * i + 2];
    // Weights sum to one; the clamp only absorbs rounding at 255.
    luma[i] = std::clamp(y, 0.0, 255.0);
  }
  return LumaImage(image.width(), image.height(), std::move(luma));
}

RasterImage Crop(const RasterImage& image, const CropSpec& spec) {
  return RasterImage(spec.width, spec.height,
                     CopyRect<RasterImage, uint8_t, RasterImage::kChannels>(
                         image, spec));
}

LumaImage Crop(const LumaImage& image, const CropSpec& spec) {
  return LumaImage(spec.width, spec.height,
                   CopyRect<LumaImage, double, 1>(image, spec));
}

CropSpec CenteredCrop(int image_width, int image_height, int crop_width,
                      int crop_height) {
  if (crop_width > image_width || crop_height > image_height ||
      crop_width < 1 || crop_height < 1) {
    throw Error(ErrorCode::kOutOfBounds,
                "centered crop " + std::to_string(crop_width) + "x" +
                    std::to_string(crop_height) + " does not fit " +
                    std::to_string(image_width) + "x" +
                    std::to_string(image_height));
  }
  return CropSpec{(image_width - crop_width) / 2,
                  (image_height - crop_height) / 2, crop_width, crop_height};
}

}  // namespace fidelity::raster
