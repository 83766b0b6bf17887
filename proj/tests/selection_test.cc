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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "fidelity/error.h"
#include "fidelity/manifest.h"
#include "fidelity/metrics.h"
#include "fidelity/raster.h"
#include "fidelity/synth.h"
#include "test_util.h"

namespace fidelity::selection {
namespace {

using service::NoPrefPolicy;

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

Triplet Make(const std::string& id, double psnr, double rate = 0.25) {
  Triplet t;
  t.id = id;
  t.reference_id = id;
  t.rate_bpp = rate;
  t.inter_codec_psnr = psnr;
  return t;
}

std::set<std::string> Ids(const std::vector<Triplet>& v) {
  std::set<std::string> out;
  for (const auto& t : v) out.insert(t.id);
  return out;
}

TEST(Filter, StrictlyAboveThresholdIsRemoved) {
  const std::vector<Triplet> u = {Make("a", 30), Make("b", 33), Make("c", 35)};
  const Partition p = FilterByThreshold(u, 32);
  EXPECT_EQ(p.removed.size(), 2u);
  EXPECT_EQ(Ids(p.kept), std::set<std::string>{"a"});
  // Equality keeps the triplet.
  EXPECT_EQ(FilterByThreshold(u, 33).removed.size(), 1u);
}

TEST(Filter, ThresholdAboveEverything) {
  const std::vector<Triplet> u = {Make("a", 30), Make("b", 33)};
  EXPECT_TRUE(FilterByThreshold(u, 60).removed.empty());
}

TEST(Filter, IdenticalPairsAlwaysRemoved) {
  const std::vector<Triplet> u = {
      Make("a", std::numeric_limits<double>::infinity()), Make("b", 20)};
  EXPECT_EQ(Ids(FilterByThreshold(u, 1e6).removed),
            std::set<std::string>{"a"});
}

TEST(Filter, PartitionsUniverse) {
  std::mt19937_64 rng(3);
  std::vector<Triplet> u;
  for (int i = 0; i < 100; ++i) {
    u.push_back(Make("t" + std::to_string(i), 15 + (rng() % 2000) / 100.0));
  }
  for (double t = 10; t <= 40; t += 0.7) {
    const Partition p = FilterByThreshold(u, t);
    EXPECT_EQ(p.kept.size() + p.removed.size(), u.size());
    std::set<std::string> all = Ids(p.kept);
    for (const auto& r : p.removed) EXPECT_TRUE(all.insert(r.id).second);
  }
}

TEST(Labels, ParseAndPolicies) {
  const PreliminaryLabels labels = ParsePreliminaryLabels(
      "triplet_id,expert_id,label\n"
      "t1,e1,NO_PREF\nt1,e2,NO_PREF\nt1,e3,A\n"
      "t2,e1,NO_PREF\nt2,e2,B\nt2,e3,A\n"
      "t3,e1,NO_PREF\nt3,e2,NO_PREF\nt3,e3,NO_PREF\n");
  EXPECT_EQ(labels.size(), 9u);
  EXPECT_EQ(labels.NoPreferenceSet(NoPrefPolicy::kMajority),
            (std::set<std::string>{"t1", "t3"}));
  EXPECT_EQ(labels.NoPreferenceSet(NoPrefPolicy::kAny),
            (std::set<std::string>{"t1", "t2", "t3"}));
  EXPECT_EQ(labels.NoPreferenceSet(NoPrefPolicy::kUnanimous),
            (std::set<std::string>{"t3"}));
}

TEST(Labels, Errors) {
  EXPECT_EQ(CodeOf([] {
              ParsePreliminaryLabels("triplet_id,expert_id,label\nt1,e1,A\n"
                                     "t1,e1,B\n");
            }),
            ErrorCode::kDuplicate);
  EXPECT_EQ(CodeOf([] {
              ParsePreliminaryLabels("triplet_id,expert_id,label\nt1,e1,C\n");
            }),
            ErrorCode::kParse);
}

TEST(ClassificationRate, HalfOverlap) {
  // S = {t1, t2}; P(t) = {t2, t3}.
  const std::vector<Triplet> u = {Make("t1", 25), Make("t2", 35),
                                  Make("t3", 40)};
  PreliminaryLabels labels;
  labels.Add("t1", "e1", Label::kNoPref);
  labels.Add("t2", "e1", Label::kNoPref);
  labels.Add("t3", "e1", Label::kA);
  EXPECT_DOUBLE_EQ(ClassificationRate(labels, u, 32, NoPrefPolicy::kMajority),
                   0.5);
  EXPECT_DOUBLE_EQ(ClassificationRate(labels, u, 20, NoPrefPolicy::kMajority),
                   1.0);
}

TEST(ClassificationRate, EmptySet) {
  const std::vector<Triplet> u = {Make("t1", 25)};
  PreliminaryLabels labels;
  labels.Add("t1", "e1", Label::kA);
  EXPECT_EQ(CodeOf([&] {
              ClassificationRate(labels, u, 20, NoPrefPolicy::kMajority);
            }),
            ErrorCode::kEmptySet);
  EXPECT_EQ(CodeOf([&] {
              ClassificationRate(PreliminaryLabels{}, u, 20,
                                 NoPrefPolicy::kMajority);
            }),
            ErrorCode::kEmptySet);
}

TEST(ClassificationRate, UnknownTriplet) {
  const std::vector<Triplet> u = {Make("t1", 25)};
  PreliminaryLabels labels;
  labels.Add("zz", "e1", Label::kNoPref);
  EXPECT_EQ(CodeOf([&] {
              ClassificationRate(labels, u, 20, NoPrefPolicy::kMajority);
            }),
            ErrorCode::kUnknownKey);
}

TEST(Sweep, MatchesEnumeration) {
  std::mt19937_64 rng(99);
  std::vector<Triplet> u;
  PreliminaryLabels labels;
  std::vector<std::pair<std::string, double>> truth;
  std::set<std::string> s;
  for (int i = 0; i < 200; ++i) {
    const std::string id = "t" + std::to_string(i);
    const double psnr = 18.0 + (rng() % 2500) / 100.0;
    u.push_back(Make(id, psnr, 0.06 * (1 + i % 5)));
    truth.emplace_back(id, psnr);
    if (rng() % 3 == 0) {
      labels.Add(id, "e1", Label::kNoPref);
      s.insert(id);
    } else {
      labels.Add(id, "e1", Label::kB);
    }
  }
  const auto points = Sweep(&labels, u, 15, 45, 0.25,
                            NoPrefPolicy::kMajority);
  ASSERT_EQ(points.size(), 121u);
  for (size_t i = 0; i < points.size(); ++i) {
    const double t = 15 + 0.25 * i;
    EXPECT_DOUBLE_EQ(points[i].t, t);
    size_t removed = 0, agree = 0;
    for (const auto& [id, psnr] : truth) {
      if (psnr > t) {
        ++removed;
        if (s.count(id)) ++agree;
      }
    }
    EXPECT_EQ(points[i].removed_count, removed) << "t=" << t;
    EXPECT_EQ(points[i].kept_count, u.size() - removed);
    ASSERT_TRUE(points[i].cr.has_value());
    EXPECT_DOUBLE_EQ(*points[i].cr,
                     static_cast<double>(agree) / static_cast<double>(s.size()));
    if (i > 0) {
      EXPECT_LE(points[i].removed_count, points[i - 1].removed_count);
      EXPECT_LE(*points[i].cr, *points[i - 1].cr);
    }
  }
}

TEST(Sweep, WithoutLabelsCrIsUndefined) {
  const std::vector<Triplet> u = {Make("a", 30), Make("b", 33)};
  const auto points = Sweep(nullptr, u, 29, 34, 1, NoPrefPolicy::kMajority);
  ASSERT_EQ(points.size(), 6u);
  for (const auto& p : points) EXPECT_FALSE(p.cr.has_value());
  EXPECT_EQ(SweepCsv(points).substr(0, 16), "t,removed,kept,c");
}

TEST(Sweep, InvalidRange) {
  const std::vector<Triplet> u = {Make("a", 30)};
  EXPECT_EQ(CodeOf([&] { Sweep(nullptr, u, 30, 30, 1, NoPrefPolicy::kAny); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { Sweep(nullptr, u, 31, 30, 1, NoPrefPolicy::kAny); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { Sweep(nullptr, u, 20, 30, 0, NoPrefPolicy::kAny); }),
            ErrorCode::kInvalidArgument);
}

TEST(Retention, Counting) {
  std::vector<Triplet> u, kept;
  for (int i = 0; i < 5; ++i) {
    u.push_back(Make("lo" + std::to_string(i), 20, 0.1));
    u.push_back(Make("hi" + std::to_string(i), 20, 0.5));
    if (i < 4) kept.push_back(u[u.size() - 2]);
    if (i < 1) kept.push_back(u.back());
  }
  const auto r = RetentionByRate(kept, u);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_DOUBLE_EQ(r.at(0.1), 0.8);
  EXPECT_DOUBLE_EQ(r.at(0.5), 0.2);
  for (const auto& [rate, f] : RetentionByRate(u, u)) EXPECT_EQ(f, 1.0);
  for (const auto& [rate, f] : RetentionByRate({}, u)) EXPECT_EQ(f, 0.0);
}

TEST(TripletId, Format) { EXPECT_EQ(TripletId("r01", 0.25), "r01@0.25"); }

class UniverseTest : public ::testing::Test {
 protected:
  static synth::DeskStudyOptions SmallOptions() {
    synth::DeskStudyOptions o;
    o.references = 2;
    o.rates = {0.06, 0.75};
    o.image_width = 120;
    o.image_height = 100;
    o.crop_width = 96;
    o.crop_height = 80;
    return o;
  }
  testutil::TempDir dir_{"universe"};
};

TEST_F(UniverseTest, EnumeratesRefsTimesRates) {
  const auto path = synth::WriteDeskStudy(dir_.path(), SmallOptions());
  const auto manifest = service::LoadManifest(path);
  const auto u = BuildUniverse(manifest);
  ASSERT_EQ(u.size(), 4u);
  EXPECT_EQ(u[0].id, "r01@0.06");
  // Independent recomputation on the centered crop.
  for (const auto& t : u) {
    const auto a = raster::LoadImage(t.image_a);
    const auto b = raster::LoadImage(t.image_b);
    const auto crop = raster::CenteredCrop(a.width(), a.height(), 96, 80);
    EXPECT_DOUBLE_EQ(
        t.inter_codec_psnr,
        metrics::Psnr(raster::Crop(a, crop), raster::Crop(b, crop)).value);
  }
  // Natural-ish decodes never come within 10 dB of each other.
  EXPECT_EQ(FilterByThreshold(u, 10).removed.size(), u.size());
}

TEST_F(UniverseTest, SingleTriplet) {
  auto o = SmallOptions();
  o.references = 1;
  o.rates = {0.5};
  const auto u =
      BuildUniverse(service::LoadManifest(synth::WriteDeskStudy(dir_.path(), o)));
  EXPECT_EQ(u.size(), 1u);
}

TEST_F(UniverseTest, MissingDecodeNamesThePair) {
  const auto path = synth::WriteDeskStudy(dir_.path(), SmallOptions());
  std::filesystem::remove(dir_ / "codec_b/r02_0.75.png");
  try {
    BuildUniverse(service::LoadManifest(path));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    EXPECT_NE(std::string(e.what()).find("(r02, 0.75)"), std::string::npos)
        << e.what();
  }
}

}  // namespace
}  // namespace fidelity::selection
