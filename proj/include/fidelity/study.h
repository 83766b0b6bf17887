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

#ifndef FIDELITY_STUDY_H_
#define FIDELITY_STUDY_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fidelity/manifest.h"
#include "fidelity/selection.h"
#include "json.hpp"

namespace fidelity::study {

using selection::Label;

struct RegistrationForm {
  std::string name;
  std::string email;
  int age = 0;
  std::string gender;
  double display_size_in = 0.0;
};

struct ScreenProbe {
  int width = 0;
  int height = 0;
};

struct Subject {
  std::string id;
  std::string name;
  std::string email;
  int age = 0;
  std::string gender;
  double display_size_in = 0.0;
  int screen_w = 0;
  int screen_h = 0;
  int64_t registered_at_ms = 0;

  friend bool operator==(const Subject&, const Subject&) = default;
};

// Validates the form and applies the display gates. Throws kInvalidArgument
// for an incomplete form and kGateFailure with a reason a subject can read.
Subject RegisterSubject(const std::string& id, const RegistrationForm& form,
                        const ScreenProbe& probe,
                        const service::GatingRules& gating,
                        int64_t registered_at_ms);

enum class Side { kA, kB };
enum class Phase { kTraining, kTest };
enum class RawChoice { kLeft, kRight, kNoPref };

std::string_view SideName(Side side);
std::string_view PhaseName(Phase phase);
std::string_view RawChoiceName(RawChoice choice);
RawChoice ParseRawChoice(std::string_view text);
Phase ParsePhase(std::string_view text);

struct Trial {
  std::string trial_id;
  std::string triplet_id;
  Side left_is = Side::kA;
  Phase phase = Phase::kTest;
  int sequence_index = 0;

  friend bool operator==(const Trial&, const Trial&) = default;
};

// Mixes the study seed with the subject id, so a subject who reconnects gets
// the same plan back.
uint64_t SessionSeed(uint64_t study_seed, std::string_view subject_id);

// Training trials first in the given order, then a seeded permutation of
// `kept`. Every trial's side assignment comes from the same generator.
// Throws kEmptySet on empty `kept` and kInvalidArgument when the training
// and kept ids overlap.
std::vector<Trial> PlanSession(const std::string& subject_id,
                               std::span<const std::string> kept,
                               std::span<const std::string> training,
                               uint64_t study_seed);

// Maps a screen-side answer back to codec identity.
Label ResolveChoice(const Trial& trial, RawChoice raw);

struct Vote {
  std::string vote_id;
  std::string subject_id;
  std::string trial_id;
  std::string triplet_id;
  std::string reference_id;
  std::optional<double> rate_bpp;  // absent for training trials
  Phase phase = Phase::kTest;
  RawChoice raw_choice = RawChoice::kNoPref;
  Label resolved = Label::kNoPref;
  int64_t elapsed_ms = 0;
  int64_t submitted_at_ms = 0;

  friend bool operator==(const Vote&, const Vote&) = default;
};

nlohmann::json VoteToJson(const Vote& vote);
Vote VoteFromJson(const nlohmann::json& j);
nlohmann::json SubjectToJson(const Subject& subject, bool anonymized = false);
Subject SubjectFromJson(const nlohmann::json& j);

// Reads a JSON-lines vote log. A torn final line (no trailing newline and
// unparsable) is ignored; any other bad line throws kParse.
std::vector<Vote> ParseVoteLog(std::string_view text);
std::vector<Vote> LoadVoteLog(const std::filesystem::path& path);

std::string VotesCsv(std::span<const Vote> votes);

// What a triplet id refers to, for stamping votes.
struct StimulusInfo {
  std::string reference_id;
  std::optional<double> rate_bpp;
};

// Session and vote bookkeeping for one study. Not thread-safe; the service
// serializes access.
class SessionBook {
 public:
  // Called with each new vote before RecordVote returns; a throw aborts the
  // vote.
  using VoteSink = std::function<void(const Vote&)>;

  SessionBook(std::map<std::string, StimulusInfo> catalog, VoteSink sink);

  void AddSession(const std::string& subject_id, std::vector<Trial> trials);
  bool HasSession(const std::string& subject_id) const;
  const std::vector<Trial>& Session(const std::string& subject_id) const;

  // First trial without a vote, or null when the session is complete.
  const Trial* NextTrial(const std::string& subject_id) const;
  size_t VotedCount(const std::string& subject_id) const;

  // Throws kUnknownTrial when the trial is not in the subject's session and
  // kDuplicateVote when it already has a vote.
  Vote RecordVote(const std::string& subject_id, const std::string& trial_id,
                  RawChoice raw, int64_t elapsed_ms, int64_t submitted_at_ms);

  // Re-applies a logged vote during recovery, bypassing the sink.
  void Restore(const Vote& vote);

  std::optional<Vote> FindVote(const std::string& subject_id,
                               const std::string& trial_id) const;
  const std::vector<Vote>& votes() const { return votes_; }

 private:
  const Trial& FindTrial(const std::string& subject_id,
                         const std::string& trial_id) const;

  std::map<std::string, StimulusInfo> catalog_;
  VoteSink sink_;
  std::map<std::string, std::vector<Trial>> sessions_;
  // (subject, trial) -> index into votes_
  std::map<std::pair<std::string, std::string>, size_t> vote_index_;
  std::vector<Vote> votes_;
};

enum class Grouping { kByBitrate, kByContent };

struct DistributionRow {
  std::string group_key;
  size_t n_evaluated = 0;
  double share_a = 0.0;
  double share_b = 0.0;
  double share_nopref = 0.0;
};

struct VoteDistribution {
  Grouping grouping = Grouping::kByBitrate;
  std::vector<DistributionRow> rows;
};

// Shares of A / B / no-preference per rate or per reference, over TEST votes
// only. Throws kUnknownKey for a TEST vote whose triplet is not in the
// universe.
VoteDistribution Distribution(std::span<const Vote> votes, Grouping grouping,
                              const std::vector<selection::Triplet>& universe);

std::string DistributionCsv(const VoteDistribution& distribution);

}  // namespace fidelity::study

#endif  // FIDELITY_STUDY_H_
