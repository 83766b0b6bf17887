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

#ifndef FIDELITY_SYNTH_H_
#define FIDELITY_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fidelity::synth {

// Knobs for a small self-contained study on disk: procedurally generated
// references plus two "codecs" that add independent Gaussian noise.
struct DeskStudyOptions {
  std::string study_id = "desk";
  int references = 6;
  std::vector<double> rates = {0.06, 0.25, 0.75};
  uint64_t seed = 7;
  int image_width = 660;
  int image_height = 840;
  int crop_width = 620;
  int crop_height = 800;
  double threshold_db = 32.0;
  // Per-codec noise standard deviation at a given rate.
  std::function<double(double rate)> noise_sigma = [](double rate) {
    return 14.0 - 10.0 * rate;
  };
  bool training = true;
  // Writes labels.csv from five simulated experts.
  bool expert_labels = false;
};

// Writes images and manifest.json under `dir`; returns the manifest path.
std::filesystem::path WriteDeskStudy(const std::filesystem::path& dir,
                                     const DeskStudyOptions& options);

}  // namespace fidelity::synth

#endif  // FIDELITY_SYNTH_H_
