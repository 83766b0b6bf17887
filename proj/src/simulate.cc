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

#include "fidelity/simulate.h"

#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "csv_util.h"
#include "fidelity/error.h"
#include "fidelity/format.h"
#include "hash_util.h"
#include "httplib.h"
#include "json.hpp"

namespace fidelity::service {
namespace {

using nlohmann::json;

double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string ImageIdFromUrl(const std::string& url) {
  const size_t slash = url.rfind('/');
  const size_t dot = url.rfind('.');
  return url.substr(slash + 1, dot - slash - 1);
}

void CheckRow(const ChoiceProbabilities& p, double rate) {
  if (p.a < 0 || p.b < 0 || p.nopref < 0 ||
      std::abs(p.a + p.b + p.nopref - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                "choice probabilities at rate " + FormatDouble(rate) +
                    " must be non-negative and sum to 1");
  }
}

class SimulatedSubject {
 public:
  SimulatedSubject(const StudyState& state,
                   const std::map<double, ChoiceProbabilities>& profile,
                   uint64_t seed)
      : state_(state), profile_(profile), rng_(seed) {}

  std::string Choose(const json& trial) {
    const auto left = state_.Reveal(
        ImageIdFromUrl(trial["images"]["left"].get<std::string>()));
    if (!left) throw Error(ErrorCode::kUnknownKey, "unknown stimulus");
    const ChoiceProbabilities& p =
        left->rate_bpp ? ProbabilitiesAt(*left->rate_bpp)
                       : profile_.begin()->second;
    const double u = Uniform01(rng_);
    StudyState::StimulusRole preferred;
    if (u < p.a) {
      preferred = StudyState::StimulusRole::kCodecA;
    } else if (u < p.a + p.b) {
      preferred = StudyState::StimulusRole::kCodecB;
    } else {
      return "NO_PREF";
    }
    return left->role == preferred ? "LEFT" : "RIGHT";
  }

  int64_t ThinkTimeMs() { return 800 + static_cast<int64_t>(rng_() % 4000); }

 private:
  const ChoiceProbabilities& ProbabilitiesAt(double rate) const {
    auto it = profile_.find(rate);
    if (it == profile_.end()) {
      throw Error(ErrorCode::kUnknownKey,
                  "profile has no entry for rate " + FormatDouble(rate));
    }
    return it->second;
  }

  const StudyState& state_;
  const std::map<double, ChoiceProbabilities>& profile_;
  std::mt19937_64 rng_;
};

}  // namespace

std::map<double, ChoiceProbabilities> DefaultProfile(
    const std::vector<double>& rates) {
  const ChoiceProbabilities low{0.55, 0.15, 0.30};
  const ChoiceProbabilities high{0.20, 0.10, 0.70};
  std::map<double, ChoiceProbabilities> out;
  for (size_t i = 0; i < rates.size(); ++i) {
    const double f =
        rates.size() == 1 ? 0.0 : static_cast<double>(i) / (rates.size() - 1);
    ChoiceProbabilities p;
    p.a = low.a + f * (high.a - low.a);
    p.b = low.b + f * (high.b - low.b);
    p.nopref = low.nopref + f * (high.nopref - low.nopref);
    out[rates[i]] = p;
  }
  return out;
}

std::map<double, ChoiceProbabilities> LoadProfile(
    const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(internal::ReadTextFile(path, "profile"));
    std::map<double, ChoiceProbabilities> out;
    for (const json& row : j.at("rates")) {
      const double rate = row.at("rate_bpp").get<double>();
      ChoiceProbabilities p{row.at("a").get<double>(),
                            row.at("b").get<double>(),
                            row.at("nopref").get<double>()};
      CheckRow(p, rate);
      out[rate] = p;
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("profile: ") + e.what());
  }
}

std::string ProfileCsv(const std::map<double, ChoiceProbabilities>& profile) {
  std::ostringstream out;
  out << "rate_bpp,share_a,share_b,share_nopref\n";
  for (const auto& [rate, p] : profile) {
    out << FormatDouble(rate) << ',' << FormatDouble(p.a) << ','
        << FormatDouble(p.b) << ',' << FormatDouble(p.nopref) << '\n';
  }
  return out.str();
}

SimulationResult RunSimulation(const StudyState& state, const std::string& host,
                               int port, const SimulationOptions& options) {
  SimulationResult result;
  result.profile = options.profile.empty()
                       ? DefaultProfile(state.manifest().rates_bpp)
                       : options.profile;
  for (const auto& [rate, p] : result.profile) CheckRow(p, rate);
  for (double rate : state.manifest().rates_bpp) {
    if (!result.profile.count(rate)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "profile has no entry for rate " + FormatDouble(rate));
    }
  }
  if (options.subjects < 1 || options.sessions_per_subject < 1 ||
      options.concurrency < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "subjects, sessions and concurrency must be positive");
  }

  const int total_sessions = options.subjects * options.sessions_per_subject;
  std::atomic<int> next_session{0};
  std::atomic<size_t> votes{0}, test_votes{0}, registrations{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto run_session = [&](httplib::Client& client, int index) {
    const int persona = index % options.subjects;
    SimulatedSubject subject(
        state, result.profile,
        internal::SplitMix64(options.seed ^
                             internal::SplitMix64(static_cast<uint64_t>(index))));
    const json form{{"name", "Synthetic " + std::to_string(persona)},
                    {"email", "synthetic" + std::to_string(persona) +
                                  "@example.org"},
                    {"age", 20 + persona % 40},
                    {"gender", persona % 2 ? "female" : "male"},
                    {"display_size_in", 15.6},
                    {"screen", {{"width", 1920}, {"height", 1080}}}};
    auto reg = client.Post("/api/subjects", form.dump(), "application/json");
    if (!reg || reg->status != 201) {
      throw Error(ErrorCode::kIoFailure, "registration failed");
    }
    ++registrations;
    const std::string subject_id =
        json::parse(reg->body)["subject_id"].get<std::string>();
    while (!stop) {
      auto next = client.Get("/api/session/" + subject_id + "/next");
      if (!next) throw Error(ErrorCode::kIoFailure, "next-trial request failed");
      if (next->status == 204) return;
      if (next->status != 200) {
        throw Error(ErrorCode::kIoFailure,
                    "next-trial returned " + std::to_string(next->status));
      }
      const json trial = json::parse(next->body);
      const json vote{{"trial_id", trial["trial_id"]},
                      {"raw_choice", subject.Choose(trial)},
                      {"elapsed_ms", subject.ThinkTimeMs()}};
      auto posted = client.Post("/api/votes", vote.dump(), "application/json");
      if (!posted || posted->status != 201) {
        throw Error(ErrorCode::kIoFailure, "vote was not acknowledged");
      }
      const size_t n = ++votes;
      if (trial["phase"] == "TEST") ++test_votes;
      if (options.max_votes != 0 && n >= options.max_votes) stop = true;
    }
  };

  auto worker = [&] {
    httplib::Client client(host, port);
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);
    try {
      for (int i = next_session++; i < total_sessions && !stop;
           i = next_session++) {
        run_session(client, i);
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      stop = true;
    }
  };
  {
    std::vector<std::jthread> threads;
    for (int w = 1; w < options.concurrency; ++w) threads.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
  result.registrations = registrations;
  result.votes = votes;
  result.test_votes = test_votes;
  return result;
}

}  // namespace fidelity::service
