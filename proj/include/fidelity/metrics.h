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

#ifndef FIDELITY_METRICS_H_
#define FIDELITY_METRICS_H_

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fidelity/raster.h"

namespace fidelity::metrics {

enum class MetricId { kMse, kPsnr, kSsim, kMsSsimY, kLpips };

std::string_view MetricName(MetricId id);

// A metric result. PSNR of identical inputs is +infinity, which compares
// greater than every finite threshold.
struct MetricValue {
  MetricId id;
  double value;

  bool is_infinite() const;
};

// "inf" for the infinite PSNR marker, otherwise a round-trippable decimal.
std::string FormatValue(const MetricValue& v);

inline constexpr double kWeightSumTolerance = 1e-3;

struct MsSsimParams {
  int scales = 5;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363,
                                       0.1333};
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 255.0;

  double c1() const { return (k1 * peak) * (k1 * peak); }
  double c2() const { return (k2 * peak) * (k2 * peak); }

  // Throws kInvalidArgument: weight count != scales, weights not summing to
  // 1 within kWeightSumTolerance, even or non-positive window, non-positive
  // sigma.
  void Validate() const;

  // Smallest image side the parameters accept.
  int MinimumSide() const { return window_size << (scales - 1); }
};

MetricValue Mse(const raster::RasterImage& a, const raster::RasterImage& b);
MetricValue Mse(const raster::LumaImage& a, const raster::LumaImage& b);

MetricValue Psnr(const raster::RasterImage& a, const raster::RasterImage& b);
MetricValue Psnr(const raster::LumaImage& a, const raster::LumaImage& b);
MetricValue PsnrFromMse(double mse, double peak = 255.0);

MetricValue SsimSingle(const raster::LumaImage& a, const raster::LumaImage& b,
                       const MsSsimParams& params = {});
MetricValue MsSsimY(const raster::LumaImage& a, const raster::LumaImage& b,
                    const MsSsimParams& params = {});

// Metric values computed elsewhere (LPIPS, adversarial loss, ...), keyed by
// (key, metric name).
class ExternalMetricTable {
 public:
  // Throws kDuplicate or kNonFinite.
  void Insert(const std::string& key, const std::string& metric, double value);

  std::optional<double> Lookup(const std::string& key,
                               const std::string& metric) const;
  std::vector<std::string> Keys() const;
  size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

 private:
  std::map<std::pair<std::string, std::string>, double> values_;
};

// Reads a `key,metric,value` CSV.
ExternalMetricTable LoadExternalMetrics(const std::filesystem::path& path);
ExternalMetricTable ParseExternalMetrics(std::string_view text);

}  // namespace fidelity::metrics

#endif  // FIDELITY_METRICS_H_
