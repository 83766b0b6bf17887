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

#ifndef FIDELITY_RASTER_H_
#define FIDELITY_RASTER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fidelity::raster {

// Interleaved 8-bit RGB. Immutable once constructed.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage(int width, int height, std::vector<uint8_t> samples);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const uint8_t> samples() const { return samples_; }

  uint8_t at(int x, int y, int channel) const {
    return samples_[(static_cast<size_t>(y) * width_ + x) * kChannels +
                    channel];
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_;
  int height_;
  std::vector<uint8_t> samples_;
};

// Floating-point luma plane, one sample per pixel in [0, 255].
class LumaImage {
 public:
  LumaImage(int width, int height, std::vector<double> samples);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const double> samples() const { return samples_; }

  double at(int x, int y) const {
    return samples_[static_cast<size_t>(y) * width_ + x];
  }

  friend bool operator==(const LumaImage&, const LumaImage&) = default;

 private:
  int width_;
  int height_;
  std::vector<double> samples_;
};

struct CropSpec {
  int origin_x = 0;
  int origin_y = 0;
  int width = 620;
  int height = 800;

  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

enum class LumaMatrix { kBt709, kBt601 };

// Loads a PNG (8-bit RGB, gray or palette; no alpha, no 16-bit) or a binary
// PPM (P6, maxval 255). Format is sniffed from the file signature.
RasterImage LoadImage(const std::filesystem::path& path);

// Decodes from an in-memory buffer. Same rules as LoadImage.
RasterImage DecodeImage(std::span<const uint8_t> bytes);

void SavePng(const RasterImage& image, const std::filesystem::path& path);
std::vector<uint8_t> EncodePng(const RasterImage& image);
void SavePpm(const RasterImage& image, const std::filesystem::path& path);

LumaImage ToLuma(const RasterImage& image,
                 LumaMatrix matrix = LumaMatrix::kBt709);

// Copies the rectangle out of `image`. Throws kOutOfBounds unless the whole
// rectangle lies inside the source.
RasterImage Crop(const RasterImage& image, const CropSpec& spec);
LumaImage Crop(const LumaImage& image, const CropSpec& spec);

// The crop of the given size centered in a width x height image.
CropSpec CenteredCrop(int image_width, int image_height, int crop_width,
                      int crop_height);

}  // namespace fidelity::raster

#endif  // FIDELITY_RASTER_H_
