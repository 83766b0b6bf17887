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

#include "fidelity/service.h"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "fidelity/error.h"
#include "fidelity/format.h"
#include "fidelity/manifest.h"
#include "fidelity/raster.h"
#include "fidelity/synth.h"
#include "server_harness.h"
#include "test_util.h"

namespace fidelity::service {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testutil::ApiClient;
using testutil::RegistrationBody;
using testutil::Reply;
using testutil::RunningServer;

constexpr char kToken[] = "s3cret";

synth::DeskStudyOptions SmallStudy() {
  synth::DeskStudyOptions o;
  o.references = 2;
  o.rates = {0.06, 0.75};
  o.image_width = 120;
  o.image_height = 100;
  o.crop_width = 96;
  o.crop_height = 80;
  return o;
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fixture_ = new testutil::TempDir("service-fixture");
    manifest_path_ = synth::WriteDeskStudy(fixture_->path(), SmallStudy());
  }
  static void TearDownTestSuite() { delete fixture_; }

  StudyState& State() {
    if (!state_) {
      state_ = std::make_unique<StudyState>(LoadManifest(manifest_path_),
                                            state_dir_.path());
    }
    return *state_;
  }

  // Registers a subject and votes through the whole session; returns the
  // subject id and the number of trials voted.
  std::pair<std::string, size_t> RunSession(ApiClient& api,
                                            std::vector<Reply>* seen = nullptr) {
    const Reply reg = api.Post("/api/subjects", RegistrationBody());
    EXPECT_EQ(reg.status, 201) << reg.body;
    if (seen) seen->push_back(reg);
    const std::string subject = reg.Json()["subject_id"];
    size_t voted = 0;
    for (;;) {
      const Reply next = api.Get("/api/session/" + subject + "/next");
      if (seen) seen->push_back(next);
      if (next.status == 204) break;
      EXPECT_EQ(next.status, 200) << next.body;
      const json trial = next.Json();
      static const char* kChoices[] = {"LEFT", "RIGHT", "NO_PREF"};
      const Reply vote =
          api.Post("/api/votes", {{"trial_id", trial["trial_id"]},
                                  {"raw_choice", kChoices[voted % 3]},
                                  {"elapsed_ms", 800 + voted}});
      if (seen) seen->push_back(vote);
      EXPECT_EQ(vote.status, 201) << vote.body;
      ++voted;
    }
    return {subject, voted};
  }

  static size_t LineCount(const fs::path& path) {
    const std::string s = testutil::ReadFile(path);
    return static_cast<size_t>(std::count(s.begin(), s.end(), '\n'));
  }

  static testutil::TempDir* fixture_;
  static fs::path manifest_path_;
  testutil::TempDir state_dir_{"service-state"};
  std::unique_ptr<StudyState> state_;
};

testutil::TempDir* ServiceTest::fixture_ = nullptr;
fs::path ServiceTest::manifest_path_;

TEST_F(ServiceTest, HealthAndConfig) {
  RunningServer server(State());
  ApiClient api(server.port());
  EXPECT_EQ(api.Get("/api/health").status, 200);
  const Reply config = api.Get("/api/config");
  ASSERT_EQ(config.status, 200);
  EXPECT_EQ(config.Json()["gating"]["min_w"], 1920);
}

TEST_F(ServiceTest, FullSessionPersistsEveryVote) {
  RunningServer server(State());
  ApiClient api(server.port());
  const auto [subject, voted] = RunSession(api);
  // 4 test triplets + 1 training triplet.
  EXPECT_EQ(voted, 5u);
  EXPECT_EQ(LineCount(state_dir_ / "votes.jsonl"), voted);
  EXPECT_EQ(LineCount(state_dir_ / "subjects.jsonl"), 1u);
  EXPECT_EQ(api.Get("/api/session/" + subject + "/next").status, 204);
}

TEST_F(ServiceTest, RegistrationReportsTrialCounts) {
  RunningServer server(State());
  ApiClient api(server.port());
  const Reply reg = api.Post("/api/subjects", RegistrationBody(2560, 1440));
  ASSERT_EQ(reg.status, 201);
  EXPECT_EQ(reg.Json()["subject_id"], "S0001");
  EXPECT_EQ(reg.Json()["training_trials"], 1);
  EXPECT_EQ(reg.Json()["total_trials"], 5);
  const Reply next = api.Get("/api/session/S0001/next");
  EXPECT_EQ(next.Json()["phase"], "TRAINING");
  EXPECT_EQ(next.Json()["progress"]["done"], 0);
  EXPECT_EQ(next.Json()["progress"]["total"], 5);
}

TEST_F(ServiceTest, GateFailureIs422WithReason) {
  RunningServer server(State());
  ApiClient api(server.port());
  const Reply small = api.Post("/api/subjects", RegistrationBody(1366, 768));
  EXPECT_EQ(small.status, 422);
  EXPECT_EQ(small.Json()["error"], "gate");
  EXPECT_NE(small.Json()["reason"].get<std::string>().find("resolution"),
            std::string::npos);
  const Reply tiny = api.Post("/api/subjects", RegistrationBody(1920, 1080, 11));
  EXPECT_EQ(tiny.status, 422);
  EXPECT_TRUE(State().Subjects().empty());
}

TEST_F(ServiceTest, MalformedBodiesAre400) {
  RunningServer server(State());
  ApiClient api(server.port());
  EXPECT_EQ(api.PostRaw("/api/subjects", "{not json").status, 400);
  json body = RegistrationBody();
  body.erase("email");
  EXPECT_EQ(api.Post("/api/subjects", body).status, 400);
  EXPECT_EQ(api.Post("/api/votes", {{"trial_id", "S0001-t0000"},
                                    {"raw_choice", "UP"},
                                    {"elapsed_ms", 1}})
                .status,
            400);
}

TEST_F(ServiceTest, DuplicateVoteIs409WithOriginalId) {
  RunningServer server(State());
  ApiClient api(server.port());
  api.Post("/api/subjects", RegistrationBody());
  const std::string trial =
      api.Get("/api/session/S0001/next").Json()["trial_id"];
  const json vote = {{"trial_id", trial}, {"raw_choice", "LEFT"},
                     {"elapsed_ms", 10}};
  const Reply first = api.Post("/api/votes", vote);
  ASSERT_EQ(first.status, 201);
  const Reply second = api.Post("/api/votes", vote);
  EXPECT_EQ(second.status, 409);
  EXPECT_EQ(second.Json()["vote_id"], first.Json()["vote_id"]);
  EXPECT_EQ(second.Json()["code"], "duplicate_vote");
  EXPECT_EQ(LineCount(state_dir_ / "votes.jsonl"), 1u);
}

TEST_F(ServiceTest, UnknownTrialsAndSubjects) {
  RunningServer server(State());
  ApiClient api(server.port());
  api.Post("/api/subjects", RegistrationBody());
  api.Post("/api/subjects", RegistrationBody());
  EXPECT_EQ(api.Get("/api/session/S0404/next").status, 404);
  EXPECT_EQ(api.Post("/api/votes", {{"trial_id", "S0001-t0099"},
                                    {"raw_choice", "LEFT"},
                                    {"elapsed_ms", 1}})
                .status,
            404);
  // S0002's trial submitted on behalf of S0001.
  EXPECT_EQ(api.Post("/api/votes", {{"trial_id", "S0002-t0000"},
                                    {"subject_id", "S0001"},
                                    {"raw_choice", "LEFT"},
                                    {"elapsed_ms", 1}})
                .status,
            404);
}

TEST_F(ServiceTest, ImagesAreServedCropped) {
  RunningServer server(State());
  ApiClient api(server.port());
  api.Post("/api/subjects", RegistrationBody());
  // Skip the training trial.
  std::string trial = api.Get("/api/session/S0001/next").Json()["trial_id"];
  api.Post("/api/votes",
           {{"trial_id", trial}, {"raw_choice", "LEFT"}, {"elapsed_ms", 1}});
  const json next = api.Get("/api/session/S0001/next").Json();
  std::set<std::string> urls;
  for (const char* side : {"left", "center", "right"}) {
    const std::string url = next["images"][side];
    urls.insert(url);
    const Reply img = api.Get(url);
    ASSERT_EQ(img.status, 200) << url;
    EXPECT_EQ(img.headers.find("Content-Type")->second, "image/png");
    EXPECT_NE(img.headers.find("Cache-Control")->second.find("immutable"),
              std::string::npos);
    const auto decoded = raster::DecodeImage(std::vector<uint8_t>(
        img.body.begin(), img.body.end()));
    EXPECT_EQ(decoded.width(), 96);
    EXPECT_EQ(decoded.height(), 80);
  }
  EXPECT_EQ(urls.size(), 3u);
  EXPECT_EQ(api.Get("/api/images/0123456789abcdef.png").status, 404);
}

TEST_F(ServiceTest, AdminRoutesNeedToken) {
  {
    RunningServer server(State());
    ApiClient api(server.port());
    EXPECT_EQ(api.Get("/api/admin/export").status, 403);
  }
  RunningServer server(State(), {kToken, std::nullopt, 4});
  ApiClient anonymous(server.port());
  ApiClient wrong(server.port(), "guess");
  ApiClient admin(server.port(), kToken);
  EXPECT_EQ(anonymous.Get("/api/admin/export").status, 401);
  EXPECT_EQ(wrong.Get("/api/admin/export").status, 401);
  EXPECT_EQ(wrong.Get("/api/admin/subjects").status, 401);
  const Reply empty = admin.Get("/api/admin/export?format=csv");
  ASSERT_EQ(empty.status, 200);
  EXPECT_EQ(std::count(empty.body.begin(), empty.body.end(), '\n'), 1)
      << empty.body;
  EXPECT_EQ(admin.Get("/api/admin/export").body, "");
  EXPECT_EQ(admin.Get("/api/admin/export?format=xml").status, 400);
}

TEST_F(ServiceTest, AdminExportsAndAnalyses) {
  RunningServer server(State(), {kToken, std::nullopt, 4});
  ApiClient api(server.port());
  ApiClient admin(server.port(), kToken);
  RunSession(api);
  RunSession(api);
  const Reply jsonl = admin.Get("/api/admin/export?format=jsonl");
  EXPECT_EQ(std::count(jsonl.body.begin(), jsonl.body.end(), '\n'), 10);
  const Reply csv = admin.Get("/api/admin/export?format=csv");
  EXPECT_EQ(std::count(csv.body.begin(), csv.body.end(), '\n'), 11);

  const Reply subjects = admin.Get("/api/admin/subjects?anonymized=1");
  EXPECT_EQ(subjects.body.find("example.org"), std::string::npos);
  EXPECT_NE(admin.Get("/api/admin/subjects").body.find("example.org"),
            std::string::npos);

  const Reply dist = admin.Get("/api/admin/distribution?by=bitrate");
  ASSERT_EQ(dist.status, 200);
  EXPECT_NE(dist.body.find("0.06,4,"), std::string::npos) << dist.body;
  EXPECT_NE(admin.Get("/api/admin/distribution?by=content").body.find("r02,4,"),
            std::string::npos);

  const Reply sweep = admin.Post("/api/admin/sweep",
                                 {{"t_min", 10}, {"t_max", 40}, {"step", 5}});
  ASSERT_EQ(sweep.status, 200) << sweep.body;
  EXPECT_EQ(sweep.Json()["points"].size(), 7u);
  EXPECT_EQ(sweep.Json()["points"][0]["removed"], 4);
  EXPECT_EQ(admin.Post("/api/admin/sweep",
                       {{"t_min", 10}, {"t_max", 10}, {"step", 5}})
                .status,
            400);
}

TEST_F(ServiceTest, ResponsesNeverRevealCodecOrRate) {
  RunningServer server(State());
  ApiClient api(server.port());
  std::vector<Reply> seen;
  RunSession(api, &seen);
  std::vector<std::string> forbidden = {"codec", "left_is", "resolved",
                                        "image_a", "image_b", "@", "r01",
                                        "r02", "\"A\"", "\"B\""};
  for (double r : State().manifest().rates_bpp) {
    forbidden.push_back(FormatDouble(r));
  }
  for (const Reply& r : seen) {
    for (const auto& token : forbidden) {
      EXPECT_EQ(r.body.find(token), std::string::npos)
          << "'" << token << "' in " << r.body;
    }
  }
}

TEST_F(ServiceTest, RestartRecoversSessionsAndVotes) {
  std::string subject;
  std::vector<study::Vote> before;
  {
    RunningServer server(State());
    ApiClient api(server.port());
    RunSession(api);
    const Reply reg = api.Post("/api/subjects", RegistrationBody());
    subject = reg.Json()["subject_id"];
    for (int i = 0; i < 2; ++i) {
      const std::string trial =
          api.Get("/api/session/" + subject + "/next").Json()["trial_id"];
      api.Post("/api/votes",
               {{"trial_id", trial}, {"raw_choice", "RIGHT"}, {"elapsed_ms", 5}});
    }
    before = State().Votes();
  }
  const auto expected_next = State().Next(subject);
  state_.reset();

  StudyState reopened(LoadManifest(manifest_path_), state_dir_.path());
  EXPECT_EQ(reopened.Votes(), before);
  EXPECT_EQ(reopened.Subjects().size(), 2u);
  const auto next = reopened.Next(subject);
  ASSERT_TRUE(next.has_value());
  EXPECT_EQ(next->trial_id, expected_next->trial_id);
  EXPECT_EQ(next->left_image, expected_next->left_image);
  EXPECT_EQ(next->done, 2u);
  // Sequence continues; ids never repeat.
  const auto reg = reopened.Register(
      {"N", "n@example.org", 40, "male", 14}, {1920, 1200});
  EXPECT_EQ(reg.subject.id, "S0003");
}

TEST_F(ServiceTest, ConcurrentSubjects) {
  RunningServer server(State());
  std::atomic<size_t> total{0};
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < 4; ++w) {
      workers.emplace_back([&] {
        ApiClient api(server.port());
        total += RunSession(api).second;
      });
    }
  }
  EXPECT_EQ(total.load(), 20u);
  EXPECT_EQ(LineCount(state_dir_ / "votes.jsonl"), 20u);
  std::set<std::string> ids;
  for (const auto& v : State().Votes()) EXPECT_TRUE(ids.insert(v.vote_id).second);
}

TEST_F(ServiceTest, BusyPortIsReported) {
  RunningServer first(State());
  StudyServer second(State(), {});
  try {
    second.Bind("127.0.0.1", first.port());
    FAIL() << "second bind succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoFailure);
  }
}

TEST(ServiceStartup, MissingDecodeIsFatal) {
  testutil::TempDir dir("service-missing");
  const auto path = synth::WriteDeskStudy(dir.path(), SmallStudy());
  fs::remove(dir / "codec_a/r01_0.75.png");
  try {
    StudyState state(LoadManifest(path), dir / "state");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    EXPECT_NE(std::string(e.what()).find("(r01, 0.75)"), std::string::npos);
  }
}

TEST(ServiceStartup, EmptyTestSetIsFatal) {
  testutil::TempDir dir("service-empty");
  auto options = SmallStudy();
  options.threshold_db = 5.0;
  const auto path = synth::WriteDeskStudy(dir.path(), options);
  try {
    StudyState state(LoadManifest(path), dir / "state");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySet);
    EXPECT_NE(std::string(e.what()).find("empty test set"), std::string::npos);
  }
}

}  // namespace
}  // namespace fidelity::service
