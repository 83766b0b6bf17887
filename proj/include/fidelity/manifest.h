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

#ifndef FIDELITY_MANIFEST_H_
#define FIDELITY_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fidelity/loss.h"
#include "fidelity/raster.h"

namespace fidelity::service {

enum class NoPrefPolicy { kMajority, kAny, kUnanimous };
enum class PsnrPlane { kRgb, kLuma };

struct ReferenceEntry {
  std::string id;
  std::filesystem::path image;
  // Absent means "centered crop of manifest.crop_width x crop_height".
  std::optional<raster::CropSpec> crop;
};

// Explicit easy trials shown before the test phase; never analyzed.
struct TrainingEntry {
  std::string id;
  std::string reference_id;
  std::filesystem::path image_a;
  std::filesystem::path image_b;
};

struct GatingRules {
  int min_width = 1920;
  int min_height = 1080;
  double min_display_in = 13.0;
};

// Declarative description of one study. Relative paths are resolved against
// the manifest's directory at load time.
struct StudyManifest {
  std::string study_id;
  uint64_t seed = 0;
  std::vector<ReferenceEntry> references;
  int crop_width = 620;
  int crop_height = 800;
  std::vector<double> rates_bpp;
  // Path templates with {ref} and {rate} placeholders.
  std::string codec_a_dir;
  std::string codec_b_dir;
  double threshold_db = 32.0;
  NoPrefPolicy nopref_policy = NoPrefPolicy::kMajority;
  PsnrPlane psnr_plane = PsnrPlane::kRgb;
  raster::LumaMatrix luma_matrix = raster::LumaMatrix::kBt709;
  std::vector<TrainingEntry> training;
  GatingRules gating;
  loss::LambdaSchedule lambda_schedule;
  std::optional<std::filesystem::path> external_metrics;
  std::optional<std::filesystem::path> preliminary_labels;
  std::string rate_unit = "bpp";
  bool show_progress = true;
  std::filesystem::path base_dir;

  std::filesystem::path DecodePath(const std::string& codec_template,
                                   const std::string& reference_id,
                                   double rate) const;
  const ReferenceEntry& Reference(const std::string& id) const;
  // The reference's explicit crop, or the centered default crop for an image
  // of the given size.
  raster::CropSpec CropFor(const ReferenceEntry& ref, int image_width,
                           int image_height) const;
};

// Shortest decimal that round-trips, e.g. 0.06 -> "0.06".
std::string FormatRate(double rate);

std::string_view PolicyName(NoPrefPolicy policy);
NoPrefPolicy ParsePolicy(std::string_view name);

// Throws kInvalidManifest with a message naming the offending field or file.
StudyManifest LoadManifest(const std::filesystem::path& path);
StudyManifest ParseManifest(const std::string& json_text,
                            const std::filesystem::path& base_dir);

}  // namespace fidelity::service

#endif  // FIDELITY_MANIFEST_H_
