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

#ifndef FIDELITY_LOSS_H_
#define FIDELITY_LOSS_H_

#include <map>
#include <optional>
#include <vector>

namespace fidelity::loss {

// Rate-distortion weight per quality point.
class LambdaSchedule {
 public:
  LambdaSchedule() = default;
  // Throws kInvalidArgument on a non-positive lambda, kDuplicate on a
  // repeated QP index.
  explicit LambdaSchedule(const std::vector<std::pair<int, double>>& entries);

  void Add(int qp, double lambda_mse);
  double LambdaFor(int qp) const;
  std::vector<int> QpIndices() const;
  size_t size() const { return lambdas_.size(); }

 private:
  std::map<int, double> lambdas_;
};

// Weights of the MSE + luma MS-SSIM objective.
struct ConventionalLossParams {
  double alpha = 65025.0;  // 255^2
  double beta = 1275.0;

  void Validate() const;
};

// Weights of the objective that adds the adversarial and LPIPS terms.
struct PerceptualLossParams {
  double zeta = 5.0 / 6.0;
  double eta = 3.0 / 8.0;
  double theta = 0.75e-4;
  double rho = 0.005;
  double sigma = 0.5;
  double alpha = 65025.0;

  void Validate() const;
};

// Measured quantities for one (original, reconstruction) pair. `rate` is
// added as given, so it must be in the unit the lambda schedule assumes.
struct DistortionMeasurements {
  std::optional<double> mse;
  std::optional<double> ms_ssim_y;
  std::optional<double> lpips;
  std::optional<double> g_a;
  std::optional<double> rate;
};

// Slope relating MS-SSIM lambdas to MSE lambdas.
inline constexpr double kMsSsimLambdaSlope = 1275.0;

double MsSsimLambda(double lambda_mse);

// lambda * (alpha * MSE + beta * (1 - MS-SSIM_Y)) + R
double ConventionalLoss(const DistortionMeasurements& m,
                        const ConventionalLossParams& p, double lambda);

// zeta * lambda * (alpha * (eta * MSE + theta * G_a) + rho * LPIPS
//                  + sigma * (1 - MS-SSIM_Y)) + R
double PerceptualLoss(const DistortionMeasurements& m,
                      const PerceptualLossParams& p, double lambda);

}  // namespace fidelity::loss

#endif  // FIDELITY_LOSS_H_
