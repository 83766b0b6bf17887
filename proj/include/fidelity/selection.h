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

#ifndef FIDELITY_SELECTION_H_
#define FIDELITY_SELECTION_H_

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fidelity/manifest.h"

namespace fidelity::selection {

using service::NoPrefPolicy;

// One (reference, rate) comparison unit: the two codec decodes at that rate.
struct Triplet {
  std::string id;
  std::string reference_id;
  double rate_bpp = 0.0;
  std::filesystem::path image_a;
  std::filesystem::path image_b;
  // PSNR between the two decodes on the displayed crop; +inf if identical.
  double inter_codec_psnr = 0.0;
};

std::string TripletId(const std::string& reference_id, double rate_bpp);

enum class Label { kA, kB, kNoPref };

std::string_view LabelName(Label label);
Label ParseLabel(std::string_view text);

// Expert labels from the preliminary test.
class PreliminaryLabels {
 public:
  // Throws kDuplicate when the expert already labeled the triplet.
  void Add(const std::string& triplet_id, const std::string& expert_id,
           Label label);

  // Triplets whose labels resolve to "no preference" under the policy.
  std::set<std::string> NoPreferenceSet(NoPrefPolicy policy) const;

  bool empty() const { return labels_.empty(); }
  size_t size() const;
  std::set<std::string> TripletIds() const;

 private:
  // triplet id -> expert id -> label
  std::map<std::string, std::map<std::string, Label>> labels_;
};

// CSV with header `triplet_id,expert_id,label`, label in {A,B,NO_PREF}.
PreliminaryLabels LoadPreliminaryLabels(const std::filesystem::path& path);
PreliminaryLabels ParsePreliminaryLabels(std::string_view text);

// Every (reference, rate) pair of the manifest, with inter-codec PSNR
// computed on the reference's crop. Throws kNotFound naming the pair when a
// decode is missing. Evaluated in parallel; output order is references in
// manifest order, then rates ascending.
std::vector<Triplet> BuildUniverse(const service::StudyManifest& manifest);

struct Partition {
  std::vector<Triplet> kept;
  std::vector<Triplet> removed;
};

// Removes triplets whose PSNR strictly exceeds `threshold_db`.
Partition FilterByThreshold(const std::vector<Triplet>& universe,
                            double threshold_db);

// |S ∩ P(t)| / |S|, with S the no-preference set and P(t) the triplets the
// threshold would remove. Throws kEmptySet when S is empty and kUnknownKey
// when a label names a triplet outside the universe.
double ClassificationRate(const PreliminaryLabels& labels,
                          const std::vector<Triplet>& universe,
                          double threshold_db, NoPrefPolicy policy);

struct ThresholdSweepPoint {
  double t = 0.0;
  size_t removed_count = 0;
  size_t kept_count = 0;
  std::optional<double> cr;  // empty when S is empty
};

// Points at t_min, t_min + step, ... up to t_max inclusive. `labels` may be
// null, in which case every cr is undefined.
std::vector<ThresholdSweepPoint> Sweep(const PreliminaryLabels* labels,
                                       const std::vector<Triplet>& universe,
                                       double t_min, double t_max,
                                       double step, NoPrefPolicy policy);

// Per-rate kept/total fraction. Rates absent from the universe are omitted.
std::map<double, double> RetentionByRate(const std::vector<Triplet>& kept,
                                         const std::vector<Triplet>& universe);

std::string SweepCsv(const std::vector<ThresholdSweepPoint>& points);
std::string RetentionCsv(const std::map<double, double>& retention);
std::string KeptCsv(const std::vector<Triplet>& kept);
std::string SelectionReportJson(
    const service::StudyManifest& manifest,
    const std::vector<Triplet>& universe, const Partition& partition,
    const std::vector<ThresholdSweepPoint>& points,
    const std::map<double, double>& retention);

}  // namespace fidelity::selection

#endif  // FIDELITY_SELECTION_H_
