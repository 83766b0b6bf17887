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

#ifndef FIDELITY_SERVICE_H_
#define FIDELITY_SERVICE_H_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "fidelity/event_log.h"
#include "fidelity/manifest.h"
#include "fidelity/selection.h"
#include "fidelity/study.h"

namespace httplib {
class Server;
}

namespace fidelity::service {

int64_t NowMillis();

// Everything a running study needs: the selected triplets, materialized
// stimuli, subjects, sessions and votes. Subjects and votes are persisted to
// `state_dir` as JSON-lines logs and replayed on construction. Thread-safe.
class StudyState {
 public:
  // Throws kNotFound for a missing decode, kEmptySet when the threshold
  // removes every triplet.
  StudyState(StudyManifest manifest, std::filesystem::path state_dir);
  ~StudyState();

  const StudyManifest& manifest() const { return manifest_; }
  const std::vector<selection::Triplet>& universe() const { return universe_; }
  const std::vector<selection::Triplet>& kept() const { return kept_; }
  const std::filesystem::path& state_dir() const { return state_dir_; }

  struct Registration {
    study::Subject subject;
    size_t training_trials = 0;
    size_t total_trials = 0;
  };
  // Throws kGateFailure / kInvalidArgument; nothing is stored on failure.
  Registration Register(const study::RegistrationForm& form,
                        const study::ScreenProbe& probe);

  // What a subject's client is allowed to see of a trial.
  struct TrialView {
    std::string trial_id;
    study::Phase phase = study::Phase::kTest;
    std::string left_image;
    std::string center_image;
    std::string right_image;
    size_t done = 0;
    size_t total = 0;
  };
  // Empty once the session is complete. Throws kUnknownKey for an unknown
  // subject.
  std::optional<TrialView> Next(const std::string& subject_id) const;

  struct VoteReceipt {
    study::Vote vote;
    bool duplicate = false;  // true: `vote` is the previously stored one
  };
  // Throws kUnknownTrial / kUnknownKey.
  VoteReceipt SubmitVote(const std::string& subject_id,
                         const std::string& trial_id, study::RawChoice raw,
                         int64_t elapsed_ms);

  std::optional<std::filesystem::path> ImagePath(
      const std::string& image_id) const;

  std::vector<study::Vote> Votes() const;
  std::vector<study::Subject> Subjects() const;

  // Sweep over the cached universe with the manifest's labels and policy.
  std::vector<selection::ThresholdSweepPoint> Sweep(double t_min, double t_max,
                                                    double step) const;

  enum class StimulusRole { kReference, kCodecA, kCodecB };
  struct StimulusTruth {
    std::string triplet_id;
    std::string reference_id;
    std::optional<double> rate_bpp;
    StimulusRole role = StimulusRole::kReference;
  };
  // Ground truth behind an opaque image id. For simulation and audits only;
  // never reachable over HTTP.
  std::optional<StimulusTruth> Reveal(const std::string& image_id) const;

 private:
  struct Stimuli {
    std::string reference;
    std::string codec_a;
    std::string codec_b;
  };

  void MaterializeStimuli();
  void Replay();
  std::string ImageIdFor(const std::string& triplet_id,
                         std::string_view role) const;

  StudyManifest manifest_;
  std::filesystem::path state_dir_;
  std::vector<selection::Triplet> universe_;
  std::vector<selection::Triplet> kept_;
  std::vector<std::string> kept_ids_;
  std::vector<std::string> training_ids_;
  std::optional<selection::PreliminaryLabels> labels_;
  std::map<std::string, Stimuli> stimuli_;  // by triplet id
  std::map<std::string, std::filesystem::path> image_files_;
  std::map<std::string, StimulusTruth> truth_;

  mutable std::shared_mutex mu_;
  std::unique_ptr<EventLog> subject_log_;
  std::unique_ptr<EventLog> vote_log_;
  std::map<std::string, study::Subject> subjects_;
  std::unique_ptr<study::SessionBook> sessions_;
};

struct ServerOptions {
  // Bearer token for /api/admin/*. Empty disables the admin routes.
  std::string admin_token;
  // Optional directory of static UI assets served at "/".
  std::optional<std::filesystem::path> static_dir;
  size_t worker_threads = 8;
};

// HTTP front end over a StudyState.
class StudyServer {
 public:
  StudyServer(StudyState& state, ServerOptions options);
  ~StudyServer();

  // Binds to host:port (port 0 picks a free one) and returns the bound port.
  // Throws kIoFailure when the port is unavailable.
  int Bind(const std::string& host, int port);
  // Serves until Stop(). Requires a successful Bind.
  void Listen();
  void Stop();
  bool running() const;

 private:
  void InstallRoutes();

  StudyState& state_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

// Admin token from FIDELITY_ADMIN_TOKEN, or empty.
std::string AdminTokenFromEnv();

}  // namespace fidelity::service

#endif  // FIDELITY_SERVICE_H_
