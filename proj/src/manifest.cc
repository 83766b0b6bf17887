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

#include "fidelity/manifest.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fidelity/error.h"
#include "fidelity/format.h"
#include "json.hpp"

namespace fidelity::service {
namespace {

using nlohmann::json;

[[noreturn]] void Invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidManifest, "manifest: " + message);
}

std::filesystem::path Resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

void ReplaceAll(std::string& s, std::string_view from, std::string_view to) {
  for (size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

template <typename T>
T Get(const json& j, const char* key) {
  if (!j.contains(key)) Invalid(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    Invalid(std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T GetOr(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return Get<T>(j, key);
}

raster::CropSpec ParseCrop(const json& j) {
  raster::CropSpec crop;
  crop.origin_x = Get<int>(j, "x");
  crop.origin_y = Get<int>(j, "y");
  crop.width = Get<int>(j, "width");
  crop.height = Get<int>(j, "height");
  if (crop.width < 1 || crop.height < 1 || crop.origin_x < 0 ||
      crop.origin_y < 0) {
    Invalid("crop rectangle must have non-negative origin and positive size");
  }
  return crop;
}

void RequireFile(const std::filesystem::path& p, const std::string& what) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) {
    Invalid(what + " not found: " + p.string());
  }
}

}  // namespace

std::string FormatRate(double rate) { return FormatDouble(rate); }

std::string_view PolicyName(NoPrefPolicy policy) {
  switch (policy) {
    case NoPrefPolicy::kMajority: return "majority";
    case NoPrefPolicy::kAny: return "any";
    case NoPrefPolicy::kUnanimous: return "unanimous";
  }
  return "majority";
}

NoPrefPolicy ParsePolicy(std::string_view name) {
  if (name == "majority") return NoPrefPolicy::kMajority;
  if (name == "any") return NoPrefPolicy::kAny;
  if (name == "unanimous") return NoPrefPolicy::kUnanimous;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown no-preference policy '" + std::string(name) + "'");
}

std::filesystem::path StudyManifest::DecodePath(
    const std::string& codec_template, const std::string& reference_id,
    double rate) const {
  std::string path = codec_template;
  ReplaceAll(path, "{ref}", reference_id);
  ReplaceAll(path, "{rate}", FormatRate(rate));
  return Resolve(base_dir, path);
}

const ReferenceEntry& StudyManifest::Reference(const std::string& id) const {
  for (const auto& ref : references) {
    if (ref.id == id) return ref;
  }
  throw Error(ErrorCode::kUnknownKey, "unknown reference '" + id + "'");
}

raster::CropSpec StudyManifest::CropFor(const ReferenceEntry& ref,
                                       int image_width,
                                       int image_height) const {
  if (ref.crop) return *ref.crop;
  return raster::CenteredCrop(image_width, image_height, crop_width,
                              crop_height);
}

StudyManifest ParseManifest(const std::string& json_text,
                            const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    Invalid(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) Invalid("top level must be an object");

  StudyManifest m;
  m.base_dir = base_dir;
  m.study_id = Get<std::string>(j, "study_id");
  m.seed = GetOr<uint64_t>(j, "seed", 0);

  if (j.contains("crop_size")) {
    m.crop_width = Get<int>(j["crop_size"], "width");
    m.crop_height = Get<int>(j["crop_size"], "height");
  }

  std::set<std::string> ref_ids;
  for (const json& r : Get<json>(j, "references")) {
    ReferenceEntry ref;
    ref.id = Get<std::string>(r, "id");
    if (ref.id.empty()) Invalid("reference id must not be empty");
    if (!ref_ids.insert(ref.id).second) {
      Invalid("duplicate reference id '" + ref.id + "'");
    }
    ref.image = Resolve(base_dir, Get<std::string>(r, "image"));
    RequireFile(ref.image, "reference image");
    if (r.contains("crop")) ref.crop = ParseCrop(r["crop"]);
    m.references.push_back(std::move(ref));
  }
  if (m.references.empty()) Invalid("at least one reference is required");

  m.rates_bpp = Get<std::vector<double>>(j, "rates_bpp");
  if (m.rates_bpp.empty()) Invalid("rates_bpp must not be empty");
  for (size_t i = 0; i < m.rates_bpp.size(); ++i) {
    if (!(m.rates_bpp[i] > 0.0) || !std::isfinite(m.rates_bpp[i])) {
      Invalid("rates must be positive and finite");
    }
    if (i > 0 && !(m.rates_bpp[i] > m.rates_bpp[i - 1])) {
      Invalid("rates_bpp must be strictly increasing");
    }
  }

  m.codec_a_dir = Get<std::string>(j, "codec_a_dir");
  m.codec_b_dir = Get<std::string>(j, "codec_b_dir");
  if (m.codec_a_dir == m.codec_b_dir) {
    Invalid("codec_a_dir and codec_b_dir must differ");
  }

  m.threshold_db = GetOr<double>(j, "threshold_db", 32.0);
  if (!std::isfinite(m.threshold_db)) Invalid("threshold_db must be finite");

  try {
    m.nopref_policy =
        ParsePolicy(GetOr<std::string>(j, "nopref_policy", "majority"));
  } catch (const Error& e) {
    Invalid(e.what());
  }

  const auto plane = GetOr<std::string>(j, "psnr_plane", "rgb");
  if (plane == "rgb") {
    m.psnr_plane = PsnrPlane::kRgb;
  } else if (plane == "luma") {
    m.psnr_plane = PsnrPlane::kLuma;
  } else {
    Invalid("psnr_plane must be 'rgb' or 'luma'");
  }

  const auto matrix = GetOr<std::string>(j, "luma_matrix", "bt709");
  if (matrix == "bt709") {
    m.luma_matrix = raster::LumaMatrix::kBt709;
  } else if (matrix == "bt601") {
    m.luma_matrix = raster::LumaMatrix::kBt601;
  } else {
    Invalid("luma_matrix must be 'bt709' or 'bt601'");
  }

  if (j.contains("training_triplets")) {
    std::set<std::string> training_ids;
    for (const json& t : j["training_triplets"]) {
      TrainingEntry entry;
      entry.id = Get<std::string>(t, "id");
      entry.reference_id = Get<std::string>(t, "reference");
      if (!ref_ids.count(entry.reference_id)) {
        Invalid("training triplet '" + entry.id +
                "' names unknown reference '" + entry.reference_id + "'");
      }
      if (!training_ids.insert(entry.id).second) {
        Invalid("duplicate training triplet id '" + entry.id + "'");
      }
      entry.image_a = Resolve(base_dir, Get<std::string>(t, "image_a"));
      entry.image_b = Resolve(base_dir, Get<std::string>(t, "image_b"));
      RequireFile(entry.image_a, "training image");
      RequireFile(entry.image_b, "training image");
      m.training.push_back(std::move(entry));
    }
  }

  if (j.contains("gating")) {
    const json& g = j["gating"];
    m.gating.min_width = GetOr<int>(g, "min_w", m.gating.min_width);
    m.gating.min_height = GetOr<int>(g, "min_h", m.gating.min_height);
    m.gating.min_display_in =
        GetOr<double>(g, "min_display_in", m.gating.min_display_in);
  }

  if (j.contains("lambda_schedule")) {
    try {
      for (const json& e : j["lambda_schedule"]) {
        m.lambda_schedule.Add(Get<int>(e, "qp"), Get<double>(e, "lambda"));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kInvalidManifest) throw;
      Invalid(std::string("lambda_schedule: ") + e.what());
    }
  }

  if (j.contains("external_metrics")) {
    m.external_metrics =
        Resolve(base_dir, Get<std::string>(j, "external_metrics"));
    RequireFile(*m.external_metrics, "external metrics file");
  }
  if (j.contains("preliminary_labels")) {
    m.preliminary_labels =
        Resolve(base_dir, Get<std::string>(j, "preliminary_labels"));
    RequireFile(*m.preliminary_labels, "preliminary labels file");
  }
  m.rate_unit = GetOr<std::string>(j, "rate_unit", "bpp");
  m.show_progress = GetOr<bool>(j, "show_progress", true);
  return m;
}

StudyManifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kInvalidManifest,
                "manifest: cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseManifest(buffer.str(), path.parent_path());
}

}  // namespace fidelity::service
