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

#ifndef FIDELITY_SIMULATE_H_
#define FIDELITY_SIMULATE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fidelity/service.h"

namespace fidelity::service {

struct ChoiceProbabilities {
  double a = 0.0;
  double b = 0.0;
  double nopref = 0.0;
};

// Linear interpolation from (0.55, 0.15, 0.30) at the lowest rate to
// (0.20, 0.10, 0.70) at the highest.
std::map<double, ChoiceProbabilities> DefaultProfile(
    const std::vector<double>& rates);

// JSON: {"rates": [{"rate_bpp": r, "a": pa, "b": pb, "nopref": pn}, ...]}.
// Each row must sum to 1 within 1e-9.
std::map<double, ChoiceProbabilities> LoadProfile(
    const std::filesystem::path& path);

struct SimulationOptions {
  int subjects = 20;
  // Independent sessions per synthetic subject; each is registered as its
  // own study participant.
  int sessions_per_subject = 1;
  uint64_t seed = 1;
  std::map<double, ChoiceProbabilities> profile;  // empty: DefaultProfile
  int concurrency = 1;
  // Stop after this many acknowledged votes (0 = run to completion).
  size_t max_votes = 0;
};

struct SimulationResult {
  size_t registrations = 0;
  size_t votes = 0;
  size_t test_votes = 0;
  std::map<double, ChoiceProbabilities> profile;
};

// Plays synthetic subjects against a running server over HTTP. `state` is
// only consulted to look up which blinded stimulus is which, standing in
// for what a human sees.
SimulationResult RunSimulation(const StudyState& state, const std::string& host,
                               int port, const SimulationOptions& options);

std::string ProfileCsv(const std::map<double, ChoiceProbabilities>& profile);

}  // namespace fidelity::service

#endif  // FIDELITY_SIMULATE_H_
