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

#include <gtest/gtest.h>

#include "fidelity/error.h"

namespace fidelity::loss {
namespace {

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

DistortionMeasurements Golden() {
  DistortionMeasurements m;
  m.mse = 0.001;
  m.ms_ssim_y = 0.98;
  m.lpips = 0.1;
  m.g_a = 2.0;
  m.rate = 0.5;
  return m;
}

TEST(MsSsimLambda, LinearSlope) {
  EXPECT_EQ(MsSsimLambda(1.0), 1275.0);
  EXPECT_EQ(MsSsimLambda(0.01), 12.75);
  EXPECT_EQ(CodeOf([] { MsSsimLambda(0.0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { MsSsimLambda(-1.0); }), ErrorCode::kInvalidArgument);
}

TEST(ConventionalLoss, ZeroDistortionIsRate) {
  DistortionMeasurements m;
  m.mse = 0.0;
  m.ms_ssim_y = 1.0;
  m.rate = 0.5;
  EXPECT_EQ(ConventionalLoss(m, {}, 0.01), 0.5);
  EXPECT_EQ(ConventionalLoss(m, {}, 123.0), 0.5);
}

TEST(ConventionalLoss, Golden) {
  // 0.01 * (65025 * 0.001 + 1275 * 0.02) + 0.5
  //   = 0.01 * (65.025 + 25.5) + 0.5 = 1.40525
  EXPECT_NEAR(ConventionalLoss(Golden(), {}, 0.01), 1.40525, 1e-9);
}

TEST(ConventionalLoss, LinearInLambda) {
  const auto m = Golden();
  const double l1 = ConventionalLoss(m, {}, 0.01) - *m.rate;
  const double l2 = ConventionalLoss(m, {}, 0.02) - *m.rate;
  EXPECT_NEAR(l2, 2 * l1, 1e-12);
}

TEST(ConventionalLoss, BetaZeroIsClassicForm) {
  const auto m = Golden();
  ConventionalLossParams p;
  p.beta = 0.0;
  EXPECT_DOUBLE_EQ(ConventionalLoss(m, p, 0.01), 0.01 * 65025 * 0.001 + 0.5);
}

TEST(ConventionalLoss, StrictlyIncreasingInEachTerm) {
  const auto base = Golden();
  const double l0 = ConventionalLoss(base, {}, 0.01);
  auto m = base;
  m.mse = *m.mse * 1.5;
  EXPECT_GT(ConventionalLoss(m, {}, 0.01), l0);
  m = base;
  m.ms_ssim_y = 0.9;
  EXPECT_GT(ConventionalLoss(m, {}, 0.01), l0);
}

TEST(ConventionalLoss, MissingMeasurement) {
  auto m = Golden();
  m.ms_ssim_y.reset();
  EXPECT_EQ(CodeOf([&] { ConventionalLoss(m, {}, 0.01); }),
            ErrorCode::kMissingMeasurement);
  // lpips and g_a are not needed here.
  m = Golden();
  m.lpips.reset();
  m.g_a.reset();
  EXPECT_NO_THROW(ConventionalLoss(m, {}, 0.01));
}

TEST(ConventionalLoss, NonPositiveLambda) {
  EXPECT_EQ(CodeOf([] { ConventionalLoss(Golden(), {}, 0.0); }),
            ErrorCode::kInvalidArgument);
}

TEST(PerceptualLoss, ZeroDistortionIsRate) {
  DistortionMeasurements m;
  m.mse = 0.0;
  m.ms_ssim_y = 1.0;
  m.lpips = 0.0;
  m.g_a = 0.0;
  m.rate = 0.75;
  EXPECT_EQ(PerceptualLoss(m, {}, 0.01), 0.75);
}

TEST(PerceptualLoss, Golden) {
  // eta*mse = 0.000375, theta*g_a = 0.00015; 65025 * 0.000525 = 34.138125
  // rho*lpips = 0.0005, sigma*(1 - 0.98) = 0.01  -> 34.148625
  // * 0.01 * 5/6 = 0.284571875; + 0.5 = 0.784571875
  EXPECT_NEAR(PerceptualLoss(Golden(), {}, 0.01), 0.784571875, 1e-9);
}

TEST(PerceptualLoss, LinearInLambda) {
  const auto m = Golden();
  const double l1 = PerceptualLoss(m, {}, 0.01) - *m.rate;
  const double l3 = PerceptualLoss(m, {}, 0.03) - *m.rate;
  EXPECT_NEAR(l3, 3 * l1, 1e-12);
}

TEST(PerceptualLoss, MseOnlyForm) {
  DistortionMeasurements m;
  m.mse = 0.004;
  m.ms_ssim_y = 1.0;
  m.lpips = 0.0;
  m.g_a = 0.0;
  m.rate = 0.25;
  const PerceptualLossParams p;
  const double lambda = 0.02;
  EXPECT_EQ(PerceptualLoss(m, p, lambda),
            p.zeta * lambda * (p.alpha * (p.eta * *m.mse)) + *m.rate);
  EXPECT_NEAR(PerceptualLoss(m, p, lambda),
              p.zeta * lambda * p.alpha * p.eta * *m.mse + *m.rate, 1e-15);
}

TEST(PerceptualLoss, StrictlyIncreasingInEachTerm) {
  const auto base = Golden();
  const double l0 = PerceptualLoss(base, {}, 0.01);
  for (int term = 0; term < 4; ++term) {
    auto m = base;
    switch (term) {
      case 0: m.mse = *m.mse + 1e-4; break;
      case 1: m.ms_ssim_y = *m.ms_ssim_y - 0.01; break;
      case 2: m.lpips = *m.lpips + 0.05; break;
      case 3: m.g_a = *m.g_a + 0.5; break;
    }
    EXPECT_GT(PerceptualLoss(m, {}, 0.01), l0) << "term " << term;
  }
}

TEST(PerceptualLoss, MissingLpips) {
  auto m = Golden();
  m.lpips.reset();
  EXPECT_EQ(CodeOf([&] { PerceptualLoss(m, {}, 0.01); }),
            ErrorCode::kMissingMeasurement);
  m = Golden();
  m.g_a.reset();
  EXPECT_EQ(CodeOf([&] { PerceptualLoss(m, {}, 0.01); }),
            ErrorCode::kMissingMeasurement);
}

TEST(PerceptualLossParams, RejectsNonPositive) {
  PerceptualLossParams p;
  p.rho = 0.0;
  EXPECT_EQ(CodeOf([&] { p.Validate(); }), ErrorCode::kInvalidArgument);
}

TEST(LambdaSchedule, Lookup) {
  LambdaSchedule s;
  s.Add(0, 0.0018);
  EXPECT_EQ(s.LambdaFor(0), 0.0018);
  EXPECT_EQ(CodeOf([&] { s.LambdaFor(1); }), ErrorCode::kUnknownKey);
}

TEST(LambdaSchedule, FiveRates) {
  const LambdaSchedule s(
      {{0, 0.0018}, {1, 0.0035}, {2, 0.0067}, {3, 0.013}, {4, 0.025}});
  EXPECT_EQ(s.size(), 5u);
  EXPECT_EQ(s.QpIndices(), (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(LambdaSchedule, Invariants) {
  LambdaSchedule s;
  EXPECT_EQ(CodeOf([&] { s.Add(0, 0.0); }), ErrorCode::kInvalidArgument);
  s.Add(0, 0.1);
  EXPECT_EQ(CodeOf([&] { s.Add(0, 0.2); }), ErrorCode::kDuplicate);
}

}  // namespace
}  // namespace fidelity::loss
