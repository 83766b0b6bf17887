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

#include <gtest/gtest.h>

#include "fidelity/error.h"
#include "json.hpp"
#include "test_util.h"

namespace fidelity::service {
namespace {

using nlohmann::json;

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    raster::SavePng(testutil::RandomRgb(8, 8, 1), dir_ / "ref.png");
  }

  json Minimal() const {
    return {{"study_id", "m"},
            {"seed", 5},
            {"references", {{{"id", "r1"}, {"image", "ref.png"}}}},
            {"rates_bpp", {0.06, 0.25}},
            {"codec_a_dir", "a/{ref}_{rate}.png"},
            {"codec_b_dir", "b/{ref}_{rate}.png"},
            {"threshold_db", 32}};
  }

  ErrorCode ParseCode(const json& j) const {
    try {
      ParseManifest(j.dump(), dir_.path());
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "accepted: " << j.dump();
    return ErrorCode::kInvalidArgument;
  }

  testutil::TempDir dir_{"manifest"};
};

TEST_F(ManifestTest, Defaults) {
  const StudyManifest m = ParseManifest(Minimal().dump(), dir_.path());
  EXPECT_EQ(m.study_id, "m");
  EXPECT_EQ(m.seed, 5u);
  EXPECT_EQ(m.crop_width, 620);
  EXPECT_EQ(m.crop_height, 800);
  EXPECT_EQ(m.nopref_policy, NoPrefPolicy::kMajority);
  EXPECT_EQ(m.psnr_plane, PsnrPlane::kRgb);
  EXPECT_EQ(m.gating.min_width, 1920);
  EXPECT_EQ(m.gating.min_height, 1080);
  EXPECT_EQ(m.gating.min_display_in, 13.0);
  EXPECT_TRUE(m.show_progress);
  EXPECT_EQ(m.references[0].image, dir_ / "ref.png");
  EXPECT_EQ(m.DecodePath(m.codec_a_dir, "r1", 0.25), dir_ / "a/r1_0.25.png");
}

TEST_F(ManifestTest, OptionalFields) {
  json j = Minimal();
  j["references"][0]["crop"] = {{"x", 1}, {"y", 2}, {"width", 3},
                                {"height", 4}};
  j["nopref_policy"] = "unanimous";
  j["psnr_plane"] = "luma";
  j["luma_matrix"] = "bt601";
  j["gating"] = {{"min_w", 1280}, {"min_h", 720}, {"min_display_in", 10}};
  j["lambda_schedule"] = {{{"qp", 0}, {"lambda", 0.0018}},
                          {{"qp", 1}, {"lambda", 0.0035}}};
  j["show_progress"] = false;
  const StudyManifest m = ParseManifest(j.dump(), dir_.path());
  EXPECT_EQ(*m.references[0].crop, (raster::CropSpec{1, 2, 3, 4}));
  EXPECT_EQ(m.nopref_policy, NoPrefPolicy::kUnanimous);
  EXPECT_EQ(m.psnr_plane, PsnrPlane::kLuma);
  EXPECT_EQ(m.luma_matrix, raster::LumaMatrix::kBt601);
  EXPECT_EQ(m.gating.min_width, 1280);
  EXPECT_EQ(m.lambda_schedule.LambdaFor(1), 0.0035);
  EXPECT_FALSE(m.show_progress);
}

TEST_F(ManifestTest, Rejections) {
  EXPECT_EQ(ParseCode(json::array()), ErrorCode::kInvalidManifest);
  json j = Minimal();
  j.erase("study_id");
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["rates_bpp"] = {0.25, 0.06};
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["rates_bpp"] = json::array();
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["codec_b_dir"] = j["codec_a_dir"];
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["references"][0]["image"] = "nope.png";
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["nopref_policy"] = "plurality";
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["lambda_schedule"] = {{{"qp", 0}, {"lambda", -1}}};
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["references"].push_back(j["references"][0]);
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
  j = Minimal();
  j["seed"] = "five";
  EXPECT_EQ(ParseCode(j), ErrorCode::kInvalidManifest);
}

TEST(FormatRate, Shortest) {
  EXPECT_EQ(FormatRate(0.06), "0.06");
  EXPECT_EQ(FormatRate(0.5), "0.5");
  EXPECT_EQ(FormatRate(1.0), "1");
}

TEST(Policy, RoundTrip) {
  for (auto p : {NoPrefPolicy::kMajority, NoPrefPolicy::kAny,
                 NoPrefPolicy::kUnanimous}) {
    EXPECT_EQ(ParsePolicy(PolicyName(p)), p);
  }
}

}  // namespace
}  // namespace fidelity::service
