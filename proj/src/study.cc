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

#include "fidelity/study.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "csv_util.h"
#include "hash_util.h"
#include "fidelity/error.h"
#include "fidelity/format.h"

namespace fidelity::study {
namespace {

using nlohmann::json;

using internal::Fnv1a64;
using internal::SplitMix64;

// Unbiased draw in [0, bound). std::uniform_int_distribution is
// implementation-defined, which would make plans differ across standard
// libraries.
uint64_t UniformBelow(std::mt19937_64& rng, uint64_t bound) {
  const uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

std::string TrialId(const std::string& subject_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return subject_id + "-t" + buf;
}

template <typename T>
T Field(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw Error(ErrorCode::kParse, std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kParse,
                std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

Subject RegisterSubject(const std::string& id, const RegistrationForm& form,
                        const ScreenProbe& probe,
                        const service::GatingRules& gating,
                        int64_t registered_at_ms) {
  if (form.name.empty() || form.email.empty() || form.gender.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "name, email and gender are required");
  }
  if (form.email.find('@') == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "email address is not valid");
  }
  if (form.age <= 0 || form.age > 150) {
    throw Error(ErrorCode::kInvalidArgument, "age is not valid");
  }
  if (probe.width < gating.min_width || probe.height < gating.min_height) {
    throw Error(ErrorCode::kGateFailure,
                "Your screen resolution (" + std::to_string(probe.width) +
                    "x" + std::to_string(probe.height) +
                    ") is below the required minimum of " +
                    std::to_string(gating.min_width) + "x" +
                    std::to_string(gating.min_height) + ".");
  }
  if (!(form.display_size_in >= gating.min_display_in)) {
    throw Error(ErrorCode::kGateFailure,
                "Your display size (" + FormatDouble(form.display_size_in) +
                    " in) is below the required minimum of " +
                    FormatDouble(gating.min_display_in) + " in.");
  }
  return Subject{id,
                 form.name,
                 form.email,
                 form.age,
                 form.gender,
                 form.display_size_in,
                 probe.width,
                 probe.height,
                 registered_at_ms};
}

std::string_view SideName(Side side) { return side == Side::kA ? "A" : "B"; }

std::string_view PhaseName(Phase phase) {
  return phase == Phase::kTraining ? "TRAINING" : "TEST";
}

std::string_view RawChoiceName(RawChoice choice) {
  switch (choice) {
    case RawChoice::kLeft: return "LEFT";
    case RawChoice::kRight: return "RIGHT";
    case RawChoice::kNoPref: return "NO_PREF";
  }
  return "?";
}

RawChoice ParseRawChoice(std::string_view text) {
  if (text == "LEFT") return RawChoice::kLeft;
  if (text == "RIGHT") return RawChoice::kRight;
  if (text == "NO_PREF") return RawChoice::kNoPref;
  throw Error(ErrorCode::kParse, "unknown choice '" + std::string(text) + "'");
}

Phase ParsePhase(std::string_view text) {
  if (text == "TRAINING") return Phase::kTraining;
  if (text == "TEST") return Phase::kTest;
  throw Error(ErrorCode::kParse, "unknown phase '" + std::string(text) + "'");
}

uint64_t SessionSeed(uint64_t study_seed, std::string_view subject_id) {
  return SplitMix64(study_seed ^ SplitMix64(Fnv1a64(subject_id)));
}

std::vector<Trial> PlanSession(const std::string& subject_id,
                               std::span<const std::string> kept,
                               std::span<const std::string> training,
                               uint64_t study_seed) {
  if (kept.empty()) {
    throw Error(ErrorCode::kEmptySet, "cannot plan a session: empty test set");
  }
  const std::set<std::string> kept_set(kept.begin(), kept.end());
  for (const auto& id : training) {
    if (kept_set.count(id)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "training triplet '" + id + "' is also a test triplet");
    }
  }

  std::mt19937_64 rng(SessionSeed(study_seed, subject_id));
  std::vector<std::string> order(kept.begin(), kept.end());
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[UniformBelow(rng, i)]);
  }

  std::vector<Trial> trials;
  trials.reserve(training.size() + order.size());
  auto add = [&](const std::string& triplet_id, Phase phase) {
    Trial t;
    t.sequence_index = static_cast<int>(trials.size());
    t.trial_id = TrialId(subject_id, t.sequence_index);
    t.triplet_id = triplet_id;
    t.phase = phase;
    t.left_is = (rng() >> 63) ? Side::kB : Side::kA;
    trials.push_back(std::move(t));
  };
  for (const auto& id : training) add(id, Phase::kTraining);
  for (const auto& id : order) add(id, Phase::kTest);
  return trials;
}

Label ResolveChoice(const Trial& trial, RawChoice raw) {
  const Label left = trial.left_is == Side::kA ? Label::kA : Label::kB;
  const Label right = trial.left_is == Side::kA ? Label::kB : Label::kA;
  switch (raw) {
    case RawChoice::kLeft: return left;
    case RawChoice::kRight: return right;
    case RawChoice::kNoPref: return Label::kNoPref;
  }
  return Label::kNoPref;
}

json VoteToJson(const Vote& v) {
  return json{{"vote_id", v.vote_id},
              {"subject_id", v.subject_id},
              {"trial_id", v.trial_id},
              {"triplet_id", v.triplet_id},
              {"reference_id", v.reference_id},
              {"rate_bpp", v.rate_bpp ? json(*v.rate_bpp) : json(nullptr)},
              {"phase", PhaseName(v.phase)},
              {"raw_choice", RawChoiceName(v.raw_choice)},
              {"resolved", selection::LabelName(v.resolved)},
              {"elapsed_ms", v.elapsed_ms},
              {"submitted_at_ms", v.submitted_at_ms}};
}

Vote VoteFromJson(const json& j) {
  Vote v;
  v.vote_id = Field<std::string>(j, "vote_id");
  v.subject_id = Field<std::string>(j, "subject_id");
  v.trial_id = Field<std::string>(j, "trial_id");
  v.triplet_id = Field<std::string>(j, "triplet_id");
  v.reference_id = Field<std::string>(j, "reference_id");
  if (j.contains("rate_bpp") && !j["rate_bpp"].is_null()) {
    v.rate_bpp = Field<double>(j, "rate_bpp");
  }
  v.phase = ParsePhase(Field<std::string>(j, "phase"));
  v.raw_choice = ParseRawChoice(Field<std::string>(j, "raw_choice"));
  v.resolved = selection::ParseLabel(Field<std::string>(j, "resolved"));
  v.elapsed_ms = Field<int64_t>(j, "elapsed_ms");
  v.submitted_at_ms = Field<int64_t>(j, "submitted_at_ms");
  return v;
}

json SubjectToJson(const Subject& s, bool anonymized) {
  json j{{"id", s.id},
         {"age", s.age},
         {"gender", s.gender},
         {"display_size_in", s.display_size_in},
         {"screen_w", s.screen_w},
         {"screen_h", s.screen_h},
         {"registered_at_ms", s.registered_at_ms}};
  if (!anonymized) {
    j["name"] = s.name;
    j["email"] = s.email;
  }
  return j;
}

Subject SubjectFromJson(const json& j) {
  Subject s;
  s.id = Field<std::string>(j, "id");
  s.name = Field<std::string>(j, "name");
  s.email = Field<std::string>(j, "email");
  s.age = Field<int>(j, "age");
  s.gender = Field<std::string>(j, "gender");
  s.display_size_in = Field<double>(j, "display_size_in");
  s.screen_w = Field<int>(j, "screen_w");
  s.screen_h = Field<int>(j, "screen_h");
  s.registered_at_ms = Field<int64_t>(j, "registered_at_ms");
  return s;
}

std::vector<Vote> ParseVoteLog(std::string_view text) {
  std::vector<Vote> votes;
  size_t line_no = 0;
  while (!text.empty()) {
    const size_t eol = text.find('\n');
    const bool terminated = eol != std::string_view::npos;
    const std::string_view line = internal::TrimField(text.substr(0, eol));
    text = terminated ? text.substr(eol + 1) : std::string_view{};
    ++line_no;
    if (line.empty()) continue;
    try {
      votes.push_back(VoteFromJson(json::parse(line)));
    } catch (const std::exception& e) {
      if (!terminated) break;  // torn tail from an interrupted append
      throw Error(ErrorCode::kParse, "vote log line " +
                                         std::to_string(line_no) + ": " +
                                         e.what());
    }
  }
  return votes;
}

std::vector<Vote> LoadVoteLog(const std::filesystem::path& path) {
  return ParseVoteLog(internal::ReadTextFile(path, "vote log"));
}

std::string VotesCsv(std::span<const Vote> votes) {
  std::ostringstream out;
  out << "vote_id,subject_id,trial_id,triplet_id,reference_id,rate_bpp,phase,"
         "raw_choice,resolved,elapsed_ms,submitted_at_ms\n";
  for (const Vote& v : votes) {
    out << v.vote_id << ',' << v.subject_id << ',' << v.trial_id << ','
        << v.triplet_id << ',' << v.reference_id << ','
        << (v.rate_bpp ? FormatDouble(*v.rate_bpp) : "") << ','
        << PhaseName(v.phase) << ',' << RawChoiceName(v.raw_choice) << ','
        << selection::LabelName(v.resolved) << ',' << v.elapsed_ms << ','
        << v.submitted_at_ms << '\n';
  }
  return out.str();
}

SessionBook::SessionBook(std::map<std::string, StimulusInfo> catalog,
                         VoteSink sink)
    : catalog_(std::move(catalog)), sink_(std::move(sink)) {}

void SessionBook::AddSession(const std::string& subject_id,
                             std::vector<Trial> trials) {
  for (const Trial& t : trials) {
    if (!catalog_.count(t.triplet_id)) {
      throw Error(ErrorCode::kUnknownKey,
                  "trial references unknown triplet '" + t.triplet_id + "'");
    }
  }
  if (!sessions_.emplace(subject_id, std::move(trials)).second) {
    throw Error(ErrorCode::kDuplicate,
                "subject '" + subject_id + "' already has a session");
  }
}

bool SessionBook::HasSession(const std::string& subject_id) const {
  return sessions_.count(subject_id) > 0;
}

const std::vector<Trial>& SessionBook::Session(
    const std::string& subject_id) const {
  auto it = sessions_.find(subject_id);
  if (it == sessions_.end()) {
    throw Error(ErrorCode::kUnknownKey, "unknown subject '" + subject_id + "'");
  }
  return it->second;
}

const Trial* SessionBook::NextTrial(const std::string& subject_id) const {
  for (const Trial& t : Session(subject_id)) {
    if (!vote_index_.count({subject_id, t.trial_id})) return &t;
  }
  return nullptr;
}

size_t SessionBook::VotedCount(const std::string& subject_id) const {
  size_t n = 0;
  for (const Trial& t : Session(subject_id)) {
    n += vote_index_.count({subject_id, t.trial_id});
  }
  return n;
}

const Trial& SessionBook::FindTrial(const std::string& subject_id,
                                    const std::string& trial_id) const {
  auto it = sessions_.find(subject_id);
  if (it != sessions_.end()) {
    for (const Trial& t : it->second) {
      if (t.trial_id == trial_id) return t;
    }
  }
  throw Error(ErrorCode::kUnknownTrial, "trial '" + trial_id +
                                            "' is not in the session of '" +
                                            subject_id + "'");
}

Vote SessionBook::RecordVote(const std::string& subject_id,
                             const std::string& trial_id, RawChoice raw,
                             int64_t elapsed_ms, int64_t submitted_at_ms) {
  const Trial& trial = FindTrial(subject_id, trial_id);
  if (vote_index_.count({subject_id, trial_id})) {
    throw Error(ErrorCode::kDuplicateVote,
                "trial '" + trial_id + "' already has a vote");
  }
  if (elapsed_ms < 0) {
    throw Error(ErrorCode::kInvalidArgument, "elapsed_ms must be >= 0");
  }
  const StimulusInfo& info = catalog_.at(trial.triplet_id);
  Vote v;
  char id[24];
  std::snprintf(id, sizeof(id), "v%06zu", votes_.size() + 1);
  v.vote_id = id;
  v.subject_id = subject_id;
  v.trial_id = trial_id;
  v.triplet_id = trial.triplet_id;
  v.reference_id = info.reference_id;
  v.rate_bpp = info.rate_bpp;
  v.phase = trial.phase;
  v.raw_choice = raw;
  v.resolved = ResolveChoice(trial, raw);
  v.elapsed_ms = elapsed_ms;
  v.submitted_at_ms = submitted_at_ms;
  if (sink_) sink_(v);
  vote_index_.emplace(std::make_pair(subject_id, trial_id), votes_.size());
  votes_.push_back(v);
  return v;
}

void SessionBook::Restore(const Vote& vote) {
  const Trial& trial = FindTrial(vote.subject_id, vote.trial_id);
  if (trial.triplet_id != vote.triplet_id ||
      ResolveChoice(trial, vote.raw_choice) != vote.resolved) {
    throw Error(ErrorCode::kParse, "logged vote " + vote.vote_id +
                                       " does not match the planned session");
  }
  if (!vote_index_.emplace(std::make_pair(vote.subject_id, vote.trial_id),
                           votes_.size())
           .second) {
    throw Error(ErrorCode::kDuplicateVote,
                "vote log repeats trial '" + vote.trial_id + "'");
  }
  votes_.push_back(vote);
}

std::optional<Vote> SessionBook::FindVote(const std::string& subject_id,
                                          const std::string& trial_id) const {
  auto it = vote_index_.find({subject_id, trial_id});
  if (it == vote_index_.end()) return std::nullopt;
  return votes_[it->second];
}

VoteDistribution Distribution(std::span<const Vote> votes, Grouping grouping,
                              const std::vector<selection::Triplet>& universe) {
  std::map<std::string, const selection::Triplet*> by_id;
  for (const auto& t : universe) by_id.emplace(t.id, &t);

  struct Counts {
    size_t a = 0, b = 0, nopref = 0;
  };
  // Sorted by rate (numerically) or by reference id.
  std::map<double, std::pair<std::string, Counts>> by_rate;
  std::map<std::string, Counts> by_content;
  for (const Vote& v : votes) {
    if (v.phase != Phase::kTest) continue;
    auto it = by_id.find(v.triplet_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kUnknownKey,
                  "vote " + v.vote_id + " references unknown triplet '" +
                      v.triplet_id + "'");
    }
    const selection::Triplet& t = *it->second;
    Counts* c = nullptr;
    if (grouping == Grouping::kByBitrate) {
      auto& slot = by_rate[t.rate_bpp];
      slot.first = FormatDouble(t.rate_bpp);
      c = &slot.second;
    } else {
      c = &by_content[t.reference_id];
    }
    switch (v.resolved) {
      case Label::kA: ++c->a; break;
      case Label::kB: ++c->b; break;
      case Label::kNoPref: ++c->nopref; break;
    }
  }

  VoteDistribution out;
  out.grouping = grouping;
  auto add_row = [&](const std::string& key, const Counts& c) {
    const size_t n = c.a + c.b + c.nopref;
    const double dn = static_cast<double>(n);
    out.rows.push_back({key, n, c.a / dn, c.b / dn, c.nopref / dn});
  };
  if (grouping == Grouping::kByBitrate) {
    for (const auto& [rate, slot] : by_rate) add_row(slot.first, slot.second);
  } else {
    for (const auto& [ref, c] : by_content) add_row(ref, c);
  }
  return out;
}

std::string DistributionCsv(const VoteDistribution& distribution) {
  std::ostringstream out;
  out << (distribution.grouping == Grouping::kByBitrate ? "rate_bpp"
                                                        : "reference_id")
      << ",n_evaluated,share_a,share_b,share_nopref\n";
  for (const auto& row : distribution.rows) {
    out << row.group_key << ',' << row.n_evaluated << ','
        << FormatDouble(row.share_a) << ',' << FormatDouble(row.share_b)
        << ',' << FormatDouble(row.share_nopref) << '\n';
  }
  return out.str();
}

}  // namespace fidelity::study
