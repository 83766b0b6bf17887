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

#include "fidelity/loss.h"

#include <cmath>
#include <string>

#include "fidelity/error.h"

namespace fidelity::loss {
namespace {

double Require(const std::optional<double>& value, const char* name) {
  if (!value.has_value()) {
    throw Error(ErrorCode::kMissingMeasurement,
                std::string("missing measurement: ") + name);
  }
  if (!std::isfinite(*value)) {
    throw Error(ErrorCode::kNonFinite,
                std::string("non-finite measurement: ") + name);
  }
  return *value;
}

void RequirePositive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " must be positive and finite");
  }
}

}  // namespace

LambdaSchedule::LambdaSchedule(
    const std::vector<std::pair<int, double>>& entries) {
  for (const auto& [qp, lambda] : entries) Add(qp, lambda);
}

void LambdaSchedule::Add(int qp, double lambda_mse) {
  RequirePositive(lambda_mse, "lambda");
  if (!lambdas_.emplace(qp, lambda_mse).second) {
    throw Error(ErrorCode::kDuplicate,
                "duplicate QP index " + std::to_string(qp));
  }
}

double LambdaSchedule::LambdaFor(int qp) const {
  auto it = lambdas_.find(qp);
  if (it == lambdas_.end()) {
    throw Error(ErrorCode::kUnknownKey,
                "no lambda for QP index " + std::to_string(qp));
  }
  return it->second;
}

std::vector<int> LambdaSchedule::QpIndices() const {
  std::vector<int> out;
  for (const auto& [qp, lambda] : lambdas_) out.push_back(qp);
  return out;
}

void ConventionalLossParams::Validate() const {
  RequirePositive(alpha, "alpha");
  RequirePositive(beta, "beta");
}

void PerceptualLossParams::Validate() const {
  RequirePositive(zeta, "zeta");
  RequirePositive(eta, "eta");
  RequirePositive(theta, "theta");
  RequirePositive(rho, "rho");
  RequirePositive(sigma, "sigma");
  RequirePositive(alpha, "alpha");
}

double MsSsimLambda(double lambda_mse) {
  RequirePositive(lambda_mse, "lambda_mse");
  return kMsSsimLambdaSlope * lambda_mse;
}

double ConventionalLoss(const DistortionMeasurements& m,
                        const ConventionalLossParams& p, double lambda) {
  RequirePositive(lambda, "lambda");
  // beta = 0 is accepted here to allow the plain lambda * alpha * MSE + R
  // form; Validate() is for configured studies.
  if (!(p.alpha > 0.0) || !(p.beta >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid conventional weights");
  }
  const double mse = Require(m.mse, "mse");
  const double ms_ssim = Require(m.ms_ssim_y, "ms_ssim_y");
  const double rate = Require(m.rate, "rate");
  return lambda * (p.alpha * mse + p.beta * (1.0 - ms_ssim)) + rate;
}

double PerceptualLoss(const DistortionMeasurements& m,
                      const PerceptualLossParams& p, double lambda) {
  RequirePositive(lambda, "lambda");
  p.Validate();
  const double mse = Require(m.mse, "mse");
  const double ms_ssim = Require(m.ms_ssim_y, "ms_ssim_y");
  const double lpips = Require(m.lpips, "lpips");
  const double g_a = Require(m.g_a, "g_a");
  const double rate = Require(m.rate, "rate");
  return p.zeta * lambda *
             (p.alpha * (p.eta * mse + p.theta * g_a) + p.rho * lpips +
              p.sigma * (1.0 - ms_ssim)) +
         rate;
}

}  // namespace fidelity::loss
