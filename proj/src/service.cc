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

#include <sys/socket.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "csv_util.h"
#include "fidelity/error.h"
#include "fidelity/format.h"
#include "fidelity/raster.h"
#include "hash_util.h"
#include "httplib.h"
#include "json.hpp"
#include "parallel.h"

namespace fidelity::service {
namespace {

using nlohmann::json;
using selection::Triplet;
using study::Phase;
using study::RawChoice;
using study::Side;

constexpr char kImagePrefix[] = "/api/images/";

std::string Hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void WriteFileAtomically(const std::filesystem::path& path,
                         const std::vector<uint8_t>& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (f == nullptr) {
      throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
    }
    const size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
    const bool ok = written == bytes.size() && std::fclose(f) == 0;
    if (!ok) throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kInvalidArgument:
      return 400;
    case ErrorCode::kNotFound:
    case ErrorCode::kUnknownKey:
    case ErrorCode::kUnknownTrial:
      return 404;
    case ErrorCode::kDuplicate:
    case ErrorCode::kDuplicateVote:
      return 409;
    case ErrorCode::kGateFailure:
      return 422;
    default:
      return 500;
  }
}

void SendJson(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void SendError(httplib::Response& res, int status, const std::string& message,
               std::string_view code) {
  SendJson(res, status, {{"error", message}, {"code", code}});
}

json ParseBody(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded() || !body.is_object()) {
    throw Error(ErrorCode::kParse, "request body must be a JSON object");
  }
  return body;
}

template <typename T>
T BodyField(const json& body, const char* key) {
  if (!body.contains(key)) {
    throw Error(ErrorCode::kParse, std::string("missing field '") + key + "'");
  }
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kParse,
                std::string("field '") + key + "' has the wrong type");
  }
}

// Wraps a handler so library errors map onto HTTP statuses.
template <typename Fn>
httplib::Server::Handler Guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      SendError(res, HttpStatusFor(e.code()), e.what(),
                ErrorCodeName(e.code()));
    } catch (const std::exception& e) {
      SendError(res, 500, e.what(), "internal");
    }
  };
}

}  // namespace

int64_t NowMillis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string AdminTokenFromEnv() {
  const char* token = std::getenv("FIDELITY_ADMIN_TOKEN");
  return token == nullptr ? std::string() : std::string(token);
}

StudyState::StudyState(StudyManifest manifest, std::filesystem::path state_dir)
    : manifest_(std::move(manifest)), state_dir_(std::move(state_dir)) {
  universe_ = selection::BuildUniverse(manifest_);
  kept_ = selection::FilterByThreshold(universe_, manifest_.threshold_db).kept;
  if (kept_.empty()) {
    throw Error(ErrorCode::kEmptySet,
                "empty test set: a threshold of " +
                    FormatDouble(manifest_.threshold_db) +
                    " dB removes all " + std::to_string(universe_.size()) +
                    " triplets");
  }
  for (const Triplet& t : kept_) kept_ids_.push_back(t.id);
  for (const TrainingEntry& t : manifest_.training) {
    training_ids_.push_back(t.id);
  }
  if (manifest_.preliminary_labels) {
    labels_ = selection::LoadPreliminaryLabels(*manifest_.preliminary_labels);
  }

  std::filesystem::create_directories(state_dir_ / "stimuli");
  MaterializeStimuli();

  std::map<std::string, study::StimulusInfo> catalog;
  for (const Triplet& t : kept_) {
    catalog[t.id] = {t.reference_id, t.rate_bpp};
  }
  for (const TrainingEntry& t : manifest_.training) {
    if (catalog.count(t.id)) {
      throw Error(ErrorCode::kInvalidManifest,
                  "training triplet id '" + t.id + "' collides with a test "
                  "triplet");
    }
    catalog[t.id] = {t.reference_id, std::nullopt};
  }

  vote_log_ = std::make_unique<EventLog>(state_dir_ / "votes.jsonl");
  sessions_ = std::make_unique<study::SessionBook>(
      std::move(catalog), [this](const study::Vote& v) {
        vote_log_->Append(study::VoteToJson(v).dump());
      });
  subject_log_ = std::make_unique<EventLog>(state_dir_ / "subjects.jsonl");
  Replay();
}

StudyState::~StudyState() = default;

std::string StudyState::ImageIdFor(const std::string& key,
                                   std::string_view role) const {
  const std::string material = manifest_.study_id + '\x1f' +
                               std::to_string(manifest_.seed) + '\x1f' + key +
                               '\x1f' + std::string(role);
  return Hex64(internal::SplitMix64(internal::Fnv1a64(material)));
}

void StudyState::MaterializeStimuli() {
  struct Job {
    std::filesystem::path source;
    raster::CropSpec crop;
    std::string image_id;
  };
  std::map<std::string, raster::CropSpec> crops;
  std::vector<Job> jobs;
  std::set<std::string> references_needed;
  for (const Triplet& t : kept_) references_needed.insert(t.reference_id);
  for (const TrainingEntry& t : manifest_.training) {
    references_needed.insert(t.reference_id);
  }
  for (const std::string& ref_id : references_needed) {
    const ReferenceEntry& ref = manifest_.Reference(ref_id);
    const raster::RasterImage image = raster::LoadImage(ref.image);
    crops[ref_id] = manifest_.CropFor(ref, image.width(), image.height());
    const std::string id = ImageIdFor("ref:" + ref_id, "reference");
    jobs.push_back({ref.image, crops[ref_id], id});
  }

  auto add_triplet = [&](const std::string& triplet_id,
                         const std::string& ref_id, std::optional<double> rate,
                         const std::filesystem::path& a,
                         const std::filesystem::path& b) {
    Stimuli s;
    s.reference = ImageIdFor("ref:" + ref_id, "reference");
    s.codec_a = ImageIdFor(triplet_id, "a");
    s.codec_b = ImageIdFor(triplet_id, "b");
    jobs.push_back({a, crops[ref_id], s.codec_a});
    jobs.push_back({b, crops[ref_id], s.codec_b});
    truth_[s.reference] = {"", ref_id, std::nullopt, StimulusRole::kReference};
    truth_[s.codec_a] = {triplet_id, ref_id, rate, StimulusRole::kCodecA};
    truth_[s.codec_b] = {triplet_id, ref_id, rate, StimulusRole::kCodecB};
    stimuli_[triplet_id] = s;
  };
  for (const Triplet& t : kept_) {
    add_triplet(t.id, t.reference_id, t.rate_bpp, t.image_a, t.image_b);
  }
  for (const TrainingEntry& t : manifest_.training) {
    add_triplet(t.id, t.reference_id, std::nullopt, t.image_a, t.image_b);
  }

  for (const Job& job : jobs) {
    image_files_[job.image_id] = state_dir_ / "stimuli" / (job.image_id + ".png");
  }
  internal::ParallelFor(jobs.size(), [&](size_t i) {
    const Job& job = jobs[i];
    const raster::RasterImage cropped =
        raster::Crop(raster::LoadImage(job.source), job.crop);
    WriteFileAtomically(image_files_.at(job.image_id),
                        raster::EncodePng(cropped));
  });
}

void StudyState::Replay() {
  for (const std::string& line : subject_log_->recovered_lines()) {
    const study::Subject s = study::SubjectFromJson(json::parse(line));
    sessions_->AddSession(
        s.id, study::PlanSession(s.id, kept_ids_, training_ids_,
                                 manifest_.seed));
    subjects_.emplace(s.id, s);
  }
  for (const std::string& line : vote_log_->recovered_lines()) {
    sessions_->Restore(study::VoteFromJson(json::parse(line)));
  }
}

StudyState::Registration StudyState::Register(
    const study::RegistrationForm& form, const study::ScreenProbe& probe) {
  std::unique_lock lock(mu_);
  char id[16];
  std::snprintf(id, sizeof(id), "S%04zu", subjects_.size() + 1);
  study::Subject subject =
      study::RegisterSubject(id, form, probe, manifest_.gating, NowMillis());
  std::vector<study::Trial> plan =
      study::PlanSession(subject.id, kept_ids_, training_ids_, manifest_.seed);
  subject_log_->Append(study::SubjectToJson(subject).dump());
  sessions_->AddSession(subject.id, std::move(plan));
  subjects_.emplace(subject.id, subject);
  return {subject, training_ids_.size(),
          training_ids_.size() + kept_ids_.size()};
}

std::optional<StudyState::TrialView> StudyState::Next(
    const std::string& subject_id) const {
  std::shared_lock lock(mu_);
  if (!subjects_.count(subject_id)) {
    throw Error(ErrorCode::kUnknownKey, "unknown subject '" + subject_id + "'");
  }
  const study::Trial* trial = sessions_->NextTrial(subject_id);
  if (trial == nullptr) return std::nullopt;
  const Stimuli& s = stimuli_.at(trial->triplet_id);
  TrialView view;
  view.trial_id = trial->trial_id;
  view.phase = trial->phase;
  const bool a_left = trial->left_is == Side::kA;
  view.left_image = kImagePrefix + (a_left ? s.codec_a : s.codec_b) + ".png";
  view.right_image = kImagePrefix + (a_left ? s.codec_b : s.codec_a) + ".png";
  view.center_image = kImagePrefix + s.reference + ".png";
  view.done = sessions_->VotedCount(subject_id);
  view.total = sessions_->Session(subject_id).size();
  return view;
}

StudyState::VoteReceipt StudyState::SubmitVote(const std::string& subject_id,
                                               const std::string& trial_id,
                                               RawChoice raw,
                                               int64_t elapsed_ms) {
  std::unique_lock lock(mu_);
  if (!subjects_.count(subject_id)) {
    throw Error(ErrorCode::kUnknownKey, "unknown subject '" + subject_id + "'");
  }
  if (auto existing = sessions_->FindVote(subject_id, trial_id)) {
    return {*existing, true};
  }
  return {sessions_->RecordVote(subject_id, trial_id, raw, elapsed_ms,
                                NowMillis()),
          false};
}

std::optional<std::filesystem::path> StudyState::ImagePath(
    const std::string& image_id) const {
  auto it = image_files_.find(image_id);
  if (it == image_files_.end()) return std::nullopt;
  return it->second;
}

std::vector<study::Vote> StudyState::Votes() const {
  std::shared_lock lock(mu_);
  return sessions_->votes();
}

std::vector<study::Subject> StudyState::Subjects() const {
  std::shared_lock lock(mu_);
  std::vector<study::Subject> out;
  for (const auto& [id, s] : subjects_) out.push_back(s);
  return out;
}

std::vector<selection::ThresholdSweepPoint> StudyState::Sweep(
    double t_min, double t_max, double step) const {
  return selection::Sweep(labels_ ? &*labels_ : nullptr, universe_, t_min,
                          t_max, step, manifest_.nopref_policy);
}

std::optional<StudyState::StimulusTruth> StudyState::Reveal(
    const std::string& image_id) const {
  auto it = truth_.find(image_id);
  if (it == truth_.end()) return std::nullopt;
  return it->second;
}

StudyServer::StudyServer(StudyState& state, ServerOptions options)
    : state_(state),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
  const size_t workers = options_.worker_threads;
  server_->new_task_queue = [workers] {
    return new httplib::ThreadPool(workers);
  };
  // Plain SO_REUSEADDR; the library default also sets SO_REUSEPORT, which
  // would let a second server silently share the port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  server_->set_tcp_nodelay(true);
  server_->set_payload_max_length(1 << 20);
  InstallRoutes();
}

StudyServer::~StudyServer() { Stop(); }

int StudyServer::Bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) {
      throw Error(ErrorCode::kIoFailure, "cannot bind to " + host);
    }
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoFailure,
                "port " + std::to_string(port) + " is unavailable on " + host);
  }
  return port;
}

void StudyServer::Listen() { server_->listen_after_bind(); }

void StudyServer::Stop() {
  if (server_ && server_->is_running()) server_->stop();
}

bool StudyServer::running() const { return server_->is_running(); }

void StudyServer::InstallRoutes() {
  httplib::Server& srv = *server_;
  StudyState& state = state_;
  const std::string token = options_.admin_token;

  auto authorized = [token](const httplib::Request& req,
                            httplib::Response& res) {
    if (token.empty()) {
      SendError(res, 403, "admin routes are disabled (no token configured)",
                "forbidden");
      return false;
    }
    if (req.get_header_value("Authorization") != "Bearer " + token) {
      SendError(res, 401, "admin token required", "unauthorized");
      return false;
    }
    return true;
  };

  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    SendJson(res, 200, {{"status", "ok"}});
  });

  srv.Get("/api/config", [&state](const httplib::Request&,
                                  httplib::Response& res) {
    const auto& m = state.manifest();
    SendJson(res, 200,
             {{"show_progress", m.show_progress},
              {"gating",
               {{"min_w", m.gating.min_width},
                {"min_h", m.gating.min_height},
                {"min_display_in", m.gating.min_display_in}}}});
  });

  srv.Post("/api/subjects", Guarded([&state](const httplib::Request& req,
                                             httplib::Response& res) {
    const json body = ParseBody(req);
    study::RegistrationForm form;
    form.name = BodyField<std::string>(body, "name");
    form.email = BodyField<std::string>(body, "email");
    form.age = BodyField<int>(body, "age");
    form.gender = BodyField<std::string>(body, "gender");
    form.display_size_in = BodyField<double>(body, "display_size_in");
    const json screen = BodyField<json>(body, "screen");
    study::ScreenProbe probe{BodyField<int>(screen, "width"),
                             BodyField<int>(screen, "height")};
    try {
      const auto reg = state.Register(form, probe);
      SendJson(res, 201,
               {{"subject_id", reg.subject.id},
                {"training_trials", reg.training_trials},
                {"total_trials", reg.total_trials}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kGateFailure) throw;
      SendJson(res, 422, {{"error", "gate"}, {"reason", e.what()}});
    }
  }));

  srv.Get(R"(/api/session/([^/]+)/next)",
          Guarded([&state](const httplib::Request& req,
                           httplib::Response& res) {
            const auto view = state.Next(req.matches[1]);
            if (!view) {
              res.status = 204;
              return;
            }
            json body{{"trial_id", view->trial_id},
                      {"phase", study::PhaseName(view->phase)},
                      {"images",
                       {{"left", view->left_image},
                        {"center", view->center_image},
                        {"right", view->right_image}}}};
            if (state.manifest().show_progress) {
              body["progress"] = {{"done", view->done},
                                  {"total", view->total}};
            }
            SendJson(res, 200, body);
          }));

  srv.Post("/api/votes", Guarded([&state](const httplib::Request& req,
                                          httplib::Response& res) {
    const json body = ParseBody(req);
    const auto trial_id = BodyField<std::string>(body, "trial_id");
    const auto raw =
        study::ParseRawChoice(BodyField<std::string>(body, "raw_choice"));
    const auto elapsed = BodyField<int64_t>(body, "elapsed_ms");
    std::string subject_id;
    if (body.contains("subject_id")) {
      subject_id = BodyField<std::string>(body, "subject_id");
    } else {
      const size_t sep = trial_id.rfind("-t");
      if (sep == std::string::npos) {
        throw Error(ErrorCode::kUnknownTrial,
                    "unknown trial '" + trial_id + "'");
      }
      subject_id = trial_id.substr(0, sep);
    }
    const auto receipt = state.SubmitVote(subject_id, trial_id, raw, elapsed);
    if (receipt.duplicate) {
      SendJson(res, 409,
               {{"error", "duplicate vote"},
                {"code", "duplicate_vote"},
                {"vote_id", receipt.vote.vote_id},
                {"trial_id", receipt.vote.trial_id}});
      return;
    }
    SendJson(res, 201, {{"vote_id", receipt.vote.vote_id},
                        {"trial_id", receipt.vote.trial_id}});
  }));

  srv.Get(R"(/api/images/([0-9a-f]{16})\.png)",
          [&state](const httplib::Request& req, httplib::Response& res) {
            const auto path = state.ImagePath(req.matches[1]);
            if (!path) {
              SendError(res, 404, "no such image", "not_found");
              return;
            }
            const std::string bytes =
                internal::ReadTextFile(*path, "stimulus");
            res.set_header("Cache-Control",
                           "public, max-age=31536000, immutable");
            res.set_header("ETag", "\"" + std::string(req.matches[1]) + "\"");
            res.set_content(bytes, "image/png");
          });

  srv.Get("/api/admin/export",
          Guarded([&state, authorized](const httplib::Request& req,
                                       httplib::Response& res) {
            if (!authorized(req, res)) return;
            const std::string format = req.has_param("format")
                                           ? req.get_param_value("format")
                                           : "jsonl";
            const auto votes = state.Votes();
            if (format == "csv") {
              res.set_content(study::VotesCsv(votes), "text/csv");
            } else if (format == "jsonl") {
              std::string out;
              for (const auto& v : votes) {
                out += study::VoteToJson(v).dump();
                out += '\n';
              }
              res.set_content(out, "application/x-ndjson");
            } else {
              throw Error(ErrorCode::kInvalidArgument,
                          "format must be jsonl or csv");
            }
          }));

  srv.Get("/api/admin/subjects",
          Guarded([&state, authorized](const httplib::Request& req,
                                       httplib::Response& res) {
            if (!authorized(req, res)) return;
            const bool anonymized = req.get_param_value("anonymized") == "1";
            std::string out;
            for (const auto& s : state.Subjects()) {
              out += study::SubjectToJson(s, anonymized).dump();
              out += '\n';
            }
            res.set_content(out, "application/x-ndjson");
          }));

  srv.Get("/api/admin/distribution",
          Guarded([&state, authorized](const httplib::Request& req,
                                       httplib::Response& res) {
            if (!authorized(req, res)) return;
            const std::string by = req.get_param_value("by");
            study::Grouping grouping;
            if (by == "bitrate" || by.empty()) {
              grouping = study::Grouping::kByBitrate;
            } else if (by == "content") {
              grouping = study::Grouping::kByContent;
            } else {
              throw Error(ErrorCode::kInvalidArgument,
                          "by must be bitrate or content");
            }
            const auto votes = state.Votes();
            res.set_content(study::DistributionCsv(study::Distribution(
                                votes, grouping, state.universe())),
                            "text/csv");
          }));

  srv.Post("/api/admin/sweep",
           Guarded([&state, authorized](const httplib::Request& req,
                                        httplib::Response& res) {
             if (!authorized(req, res)) return;
             const json body = ParseBody(req);
             const auto points = state.Sweep(BodyField<double>(body, "t_min"),
                                             BodyField<double>(body, "t_max"),
                                             BodyField<double>(body, "step"));
             std::string format = "json";
             if (body.contains("format")) {
               format = BodyField<std::string>(body, "format");
             }
             if (format == "csv") {
               res.set_content(selection::SweepCsv(points), "text/csv");
               return;
             }
             json out = json::array();
             for (const auto& p : points) {
               out.push_back({{"t", p.t},
                              {"removed", p.removed_count},
                              {"kept", p.kept_count},
                              {"cr", p.cr ? json(*p.cr) : json(nullptr)}});
             }
             SendJson(res, 200, {{"points", out}});
           }));

  if (options_.static_dir) {
    if (!srv.set_mount_point("/", options_.static_dir->string())) {
      throw Error(ErrorCode::kNotFound, "static directory not found: " +
                                            options_.static_dir->string());
    }
  }
}

}  // namespace fidelity::service
