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

#include "fidelity/selection.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csv_util.h"
#include "parallel.h"
#include "fidelity/error.h"
#include "fidelity/format.h"
#include "fidelity/metrics.h"
#include "fidelity/raster.h"
#include "json.hpp"

namespace fidelity::selection {
namespace {

using service::StudyManifest;

struct PendingTriplet {
  size_t reference_index;
  double rate;
};

double CropPsnr(const StudyManifest& manifest, const raster::CropSpec& crop,
                const raster::RasterImage& a, const raster::RasterImage& b) {
  const raster::RasterImage ca = raster::Crop(a, crop);
  const raster::RasterImage cb = raster::Crop(b, crop);
  if (manifest.psnr_plane == service::PsnrPlane::kLuma) {
    return metrics::Psnr(raster::ToLuma(ca, manifest.luma_matrix),
                         raster::ToLuma(cb, manifest.luma_matrix))
        .value;
  }
  return metrics::Psnr(ca, cb).value;
}

}  // namespace

std::string TripletId(const std::string& reference_id, double rate_bpp) {
  return reference_id + "@" + FormatDouble(rate_bpp);
}

std::string_view LabelName(Label label) {
  switch (label) {
    case Label::kA: return "A";
    case Label::kB: return "B";
    case Label::kNoPref: return "NO_PREF";
  }
  return "?";
}

Label ParseLabel(std::string_view text) {
  if (text == "A") return Label::kA;
  if (text == "B") return Label::kB;
  if (text == "NO_PREF") return Label::kNoPref;
  throw Error(ErrorCode::kParse, "unknown label '" + std::string(text) + "'");
}

void PreliminaryLabels::Add(const std::string& triplet_id,
                            const std::string& expert_id, Label label) {
  if (!labels_[triplet_id].emplace(expert_id, label).second) {
    throw Error(ErrorCode::kDuplicate, "expert '" + expert_id +
                                           "' already labeled triplet '" +
                                           triplet_id + "'");
  }
}

size_t PreliminaryLabels::size() const {
  size_t n = 0;
  for (const auto& [id, experts] : labels_) n += experts.size();
  return n;
}

std::set<std::string> PreliminaryLabels::TripletIds() const {
  std::set<std::string> ids;
  for (const auto& [id, experts] : labels_) ids.insert(id);
  return ids;
}

std::set<std::string> PreliminaryLabels::NoPreferenceSet(
    NoPrefPolicy policy) const {
  std::set<std::string> out;
  for (const auto& [id, experts] : labels_) {
    const size_t total = experts.size();
    const size_t nopref = static_cast<size_t>(
        std::count_if(experts.begin(), experts.end(), [](const auto& e) {
          return e.second == Label::kNoPref;
        }));
    bool member = false;
    switch (policy) {
      case NoPrefPolicy::kMajority: member = 2 * nopref > total; break;
      case NoPrefPolicy::kAny: member = nopref >= 1; break;
      case NoPrefPolicy::kUnanimous: member = total > 0 && nopref == total; break;
    }
    if (member) out.insert(id);
  }
  return out;
}

PreliminaryLabels ParsePreliminaryLabels(std::string_view text) {
  PreliminaryLabels labels;
  internal::ForEachCsvRecord(
      text, "triplet_id,expert_id,label", 3,
      [&](size_t line_no, std::span<const std::string_view> f) {
        if (f[0].empty() || f[1].empty()) {
          throw Error(ErrorCode::kParse, "labels line " +
                                             std::to_string(line_no) +
                                             ": empty triplet or expert id");
        }
        labels.Add(std::string(f[0]), std::string(f[1]), ParseLabel(f[2]));
      });
  return labels;
}

PreliminaryLabels LoadPreliminaryLabels(const std::filesystem::path& path) {
  return ParsePreliminaryLabels(
      internal::ReadTextFile(path, "preliminary labels"));
}

std::vector<Triplet> BuildUniverse(const StudyManifest& manifest) {
  std::vector<PendingTriplet> pending;
  for (size_t r = 0; r < manifest.references.size(); ++r) {
    for (double rate : manifest.rates_bpp) pending.push_back({r, rate});
  }
  // Check existence up front so the error names the first missing pair in
  // manifest order, independent of scheduling.
  for (const PendingTriplet& p : pending) {
    const auto& ref = manifest.references[p.reference_index];
    for (const auto* tmpl : {&manifest.codec_a_dir, &manifest.codec_b_dir}) {
      const auto path = manifest.DecodePath(*tmpl, ref.id, p.rate);
      std::error_code ec;
      if (!std::filesystem::is_regular_file(path, ec)) {
        throw Error(ErrorCode::kNotFound,
                    "missing decode for (" + ref.id + ", " +
                        FormatDouble(p.rate) + "): " + path.string());
      }
    }
  }

  std::vector<raster::CropSpec> crops(manifest.references.size());
  internal::ParallelFor(manifest.references.size(), [&](size_t r) {
    const auto& ref = manifest.references[r];
    const raster::RasterImage image = raster::LoadImage(ref.image);
    crops[r] = manifest.CropFor(ref, image.width(), image.height());
    raster::Crop(image, crops[r]);  // validates the rectangle
  });

  std::vector<Triplet> universe(pending.size());
  internal::ParallelFor(pending.size(), [&](size_t i) {
    const PendingTriplet& p = pending[i];
    const auto& ref = manifest.references[p.reference_index];
    Triplet& t = universe[i];
    t.id = TripletId(ref.id, p.rate);
    t.reference_id = ref.id;
    t.rate_bpp = p.rate;
    t.image_a = manifest.DecodePath(manifest.codec_a_dir, ref.id, p.rate);
    t.image_b = manifest.DecodePath(manifest.codec_b_dir, ref.id, p.rate);
    const raster::RasterImage a = raster::LoadImage(t.image_a);
    const raster::RasterImage b = raster::LoadImage(t.image_b);
    if (a.width() != b.width() || a.height() != b.height()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "decodes for " + t.id + " differ in size");
    }
    t.inter_codec_psnr = CropPsnr(manifest, crops[p.reference_index], a, b);
  });
  return universe;
}

Partition FilterByThreshold(const std::vector<Triplet>& universe,
                            double threshold_db) {
  Partition out;
  for (const Triplet& t : universe) {
    (t.inter_codec_psnr > threshold_db ? out.removed : out.kept).push_back(t);
  }
  return out;
}

double ClassificationRate(const PreliminaryLabels& labels,
                          const std::vector<Triplet>& universe,
                          double threshold_db, NoPrefPolicy policy) {
  if (labels.empty()) {
    throw Error(ErrorCode::kEmptySet, "no preliminary labels");
  }
  std::map<std::string, double> psnr;
  for (const Triplet& t : universe) psnr.emplace(t.id, t.inter_codec_psnr);
  const std::set<std::string> no_pref = labels.NoPreferenceSet(policy);
  if (no_pref.empty()) {
    throw Error(ErrorCode::kEmptySet,
                "classification rate undefined: no triplet resolves to "
                "no-preference under the '" +
                    std::string(service::PolicyName(policy)) + "' policy");
  }
  size_t agree = 0;
  for (const std::string& id : no_pref) {
    auto it = psnr.find(id);
    if (it == psnr.end()) {
      throw Error(ErrorCode::kUnknownKey,
                  "label for triplet outside the universe: " + id);
    }
    if (it->second > threshold_db) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(no_pref.size());
}

std::vector<ThresholdSweepPoint> Sweep(const PreliminaryLabels* labels,
                                       const std::vector<Triplet>& universe,
                                       double t_min, double t_max,
                                       double step, NoPrefPolicy policy) {
  if (!std::isfinite(t_min) || !std::isfinite(t_max) ||
      !std::isfinite(step) || !(t_min < t_max) || !(step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "sweep needs finite t_min < t_max and step > 0");
  }
  const bool has_s =
      labels != nullptr && !labels->empty() &&
      !labels->NoPreferenceSet(policy).empty();
  const auto count =
      static_cast<size_t>(std::floor((t_max - t_min) / step + 1e-9)) + 1;
  std::vector<ThresholdSweepPoint> points;
  points.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    ThresholdSweepPoint p;
    p.t = t_min + static_cast<double>(i) * step;
    p.removed_count = static_cast<size_t>(
        std::count_if(universe.begin(), universe.end(), [&](const Triplet& t) {
          return t.inter_codec_psnr > p.t;
        }));
    p.kept_count = universe.size() - p.removed_count;
    if (has_s) p.cr = ClassificationRate(*labels, universe, p.t, policy);
    points.push_back(p);
  }
  return points;
}

std::map<double, double> RetentionByRate(const std::vector<Triplet>& kept,
                                         const std::vector<Triplet>& universe) {
  std::map<std::string, double> rate_of;
  std::map<double, std::pair<size_t, size_t>> counts;  // kept, total
  for (const Triplet& t : universe) {
    rate_of.emplace(t.id, t.rate_bpp);
    ++counts[t.rate_bpp].second;
  }
  for (const Triplet& t : kept) {
    auto it = rate_of.find(t.id);
    if (it == rate_of.end()) {
      throw Error(ErrorCode::kUnknownKey,
                  "kept triplet outside the universe: " + t.id);
    }
    ++counts[it->second].first;
  }
  std::map<double, double> out;
  for (const auto& [rate, c] : counts) {
    out[rate] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return out;
}

std::string SweepCsv(const std::vector<ThresholdSweepPoint>& points) {
  std::ostringstream out;
  out << "t,removed,kept,cr\n";
  for (const auto& p : points) {
    out << FormatDouble(p.t) << ',' << p.removed_count << ',' << p.kept_count
        << ',' << (p.cr ? FormatDouble(*p.cr) : "") << '\n';
  }
  return out.str();
}

std::string RetentionCsv(const std::map<double, double>& retention) {
  std::ostringstream out;
  out << "rate_bpp,kept_fraction\n";
  for (const auto& [rate, fraction] : retention) {
    out << FormatDouble(rate) << ',' << FormatDouble(fraction) << '\n';
  }
  return out.str();
}

std::string KeptCsv(const std::vector<Triplet>& kept) {
  std::ostringstream out;
  out << "triplet_id,reference_id,rate_bpp,inter_codec_psnr\n";
  for (const auto& t : kept) {
    out << t.id << ',' << t.reference_id << ',' << FormatDouble(t.rate_bpp)
        << ',' << FormatDouble(t.inter_codec_psnr) << '\n';
  }
  return out.str();
}

std::string SelectionReportJson(const StudyManifest& manifest,
                                const std::vector<Triplet>& universe,
                                const Partition& partition,
                                const std::vector<ThresholdSweepPoint>& points,
                                const std::map<double, double>& retention) {
  using nlohmann::json;
  auto psnr_json = [](double v) -> json {
    return std::isinf(v) ? json("inf") : json(v);
  };
  json report;
  report["study_id"] = manifest.study_id;
  report["threshold_db"] = manifest.threshold_db;
  report["nopref_policy"] = service::PolicyName(manifest.nopref_policy);
  report["psnr_plane"] =
      manifest.psnr_plane == service::PsnrPlane::kRgb ? "rgb" : "luma";
  report["rate_unit"] = manifest.rate_unit;
  report["universe_size"] = universe.size();
  report["kept_count"] = partition.kept.size();
  report["removed_count"] = partition.removed.size();
  json triplets = json::array();
  for (const Triplet& t : universe) {
    const bool kept = t.inter_codec_psnr <= manifest.threshold_db;
    triplets.push_back({{"id", t.id},
                        {"reference_id", t.reference_id},
                        {"rate_bpp", t.rate_bpp},
                        {"inter_codec_psnr", psnr_json(t.inter_codec_psnr)},
                        {"kept", kept}});
  }
  report["triplets"] = std::move(triplets);
  json sweep = json::array();
  for (const auto& p : points) {
    sweep.push_back({{"t", p.t},
                     {"removed", p.removed_count},
                     {"kept", p.kept_count},
                     {"cr", p.cr ? json(*p.cr) : json(nullptr)}});
  }
  report["sweep"] = std::move(sweep);
  json ret = json::array();
  for (const auto& [rate, fraction] : retention) {
    ret.push_back({{"rate_bpp", rate}, {"kept_fraction", fraction}});
  }
  report["retention"] = std::move(ret);
  return report.dump(2) + "\n";
}

}  // namespace fidelity::selection
