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

#include "fidelity/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "fidelity/error.h"
#include "fidelity/format.h"
#include "fidelity/raster.h"
#include "fidelity/selection.h"
#include "json.hpp"
#include "parallel.h"

namespace fidelity::synth {
namespace {

using raster::RasterImage;

RasterImage MakeReference(int width, int height, int index, uint64_t seed) {
  std::mt19937_64 rng(seed * 1000003u + static_cast<uint64_t>(index));
  std::uniform_real_distribution<double> phase(0.0, 6.28318);
  std::uniform_real_distribution<double> freq(0.01, 0.08);
  double p[3], fx[3], fy[3];
  for (int c = 0; c < 3; ++c) {
    p[c] = phase(rng);
    fx[c] = freq(rng);
    fy[c] = freq(rng);
  }
  std::normal_distribution<double> texture(0.0, 6.0);
  std::vector<uint8_t> samples(static_cast<size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = 128.0 + 60.0 * std::sin(fx[c] * x + p[c]) *
                                     std::cos(fy[c] * y - p[c]) +
                         25.0 * std::sin(0.002 * (x * y) + c) +
                         texture(rng);
        samples[(static_cast<size_t>(y) * width + x) * 3 + c] =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return RasterImage(width, height, std::move(samples));
}

RasterImage AddNoise(const RasterImage& ref, double sigma, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<uint8_t> out(ref.samples().begin(), ref.samples().end());
  if (sigma > 0.0) {
    for (uint8_t& s : out) {
      s = static_cast<uint8_t>(
          std::clamp(std::lround(s + noise(rng)), 0L, 255L));
    }
  }
  return RasterImage(ref.width(), ref.height(), std::move(out));
}

}  // namespace

std::filesystem::path WriteDeskStudy(const std::filesystem::path& dir,
                                     const DeskStudyOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "refs");
  fs::create_directories(dir / "codec_a");
  fs::create_directories(dir / "codec_b");

  nlohmann::json manifest;
  manifest["study_id"] = options.study_id;
  manifest["seed"] = options.seed;
  manifest["crop_size"] = {{"width", options.crop_width},
                           {"height", options.crop_height}};
  manifest["rates_bpp"] = options.rates;
  manifest["codec_a_dir"] = "codec_a/{ref}_{rate}.png";
  manifest["codec_b_dir"] = "codec_b/{ref}_{rate}.png";
  manifest["threshold_db"] = options.threshold_db;
  manifest["nopref_policy"] = "majority";
  manifest["lambda_schedule"] = nlohmann::json::array();
  nlohmann::json refs = nlohmann::json::array();
  nlohmann::json training = nlohmann::json::array();

  std::mt19937_64 label_rng(options.seed ^ 0x5eedULL);
  std::string labels = "triplet_id,expert_id,label\n";

  auto ref_name = [](int r) {
    char name[16];
    std::snprintf(name, sizeof(name), "r%02d", r + 1);
    return std::string(name);
  };

  internal::ParallelFor(static_cast<size_t>(options.references), [&](size_t i) {
    const int r = static_cast<int>(i);
    const std::string name = ref_name(r);
    const RasterImage ref = MakeReference(
        options.image_width, options.image_height, r, options.seed);
    raster::SavePng(ref, dir / "refs" / (name + ".png"));
    for (size_t k = 0; k < options.rates.size(); ++k) {
      const double rate = options.rates[k];
      const double sigma = options.noise_sigma(rate);
      const std::string file = name + "_" + FormatDouble(rate) + ".png";
      const uint64_t base = options.seed * 7919u + r * 131u + k * 17u;
      raster::SavePng(AddNoise(ref, sigma, base * 2 + 1),
                      dir / "codec_a" / file);
      raster::SavePng(AddNoise(ref, sigma, base * 2 + 2),
                      dir / "codec_b" / file);
    }
    if (options.training && r == 0) {
      fs::create_directories(dir / "training");
      raster::SavePng(AddNoise(ref, 45.0, options.seed + 99),
                      dir / "training" / "easy_a.png");
      raster::SavePng(ref, dir / "training" / "easy_b.png");
    }
  });

  for (int r = 0; r < options.references; ++r) {
    const std::string name = ref_name(r);
    refs.push_back({{"id", name}, {"image", "refs/" + name + ".png"}});
    if (options.training && r == 0) {
      training.push_back({{"id", "training-1"},
                          {"reference", name},
                          {"image_a", "training/easy_a.png"},
                          {"image_b", "training/easy_b.png"}});
    }
    if (!options.expert_labels) continue;
    for (size_t k = 0; k < options.rates.size(); ++k) {
      // Experts lean towards "no preference" as the rate rises.
      const double p_nopref =
          (static_cast<double>(k) + 0.5) / options.rates.size();
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int e = 1; e <= 5; ++e) {
        const double draw = u(label_rng);
        const char* label =
            draw < p_nopref
                ? "NO_PREF"
                : (draw < p_nopref + (1 - p_nopref) * 0.7 ? "B" : "A");
        labels += selection::TripletId(name, options.rates[k]) + ",e" +
                  std::to_string(e) + "," + label + "\n";
      }
    }
  }
  manifest["references"] = refs;
  if (!training.empty()) manifest["training_triplets"] = training;
  if (options.expert_labels) {
    std::ofstream(dir / "labels.csv") << labels;
    manifest["preliminary_labels"] = "labels.csv";
  }

  const fs::path path = dir / "manifest.json";
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  if (!out) {
    throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  }
  return path;
}

}  // namespace fidelity::synth
