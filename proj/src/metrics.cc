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

#include "fidelity/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "csv_util.h"
#include "fidelity/error.h"

namespace fidelity::metrics {
namespace {

using raster::LumaImage;
using raster::RasterImage;

template <typename Image>
void RequireSameSize(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "image sizes differ: " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " +
                    std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

template <typename T>
double MeanSquaredDifference(std::span<const T> a, std::span<const T> b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

// Row-major plane of doubles used by the SSIM pipeline.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

Plane FromLuma(const LumaImage& image) {
  return Plane{image.width(), image.height(),
               std::vector<double>(image.samples().begin(),
                                   image.samples().end())};
}

std::vector<double> GaussianKernel(int size, double sigma) {
  std::vector<double> kernel(size);
  const int half = size / 2;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    kernel[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= total;
  return kernel;
}

// Separable "valid" filtering: output shrinks by size-1 in each direction.
Plane FilterValid(const Plane& in, const std::vector<double>& kernel) {
  const int k = static_cast<int>(kernel.size());
  Plane horizontal{in.width - k + 1, in.height, {}};
  horizontal.data.resize(static_cast<size_t>(horizontal.width) * in.height);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < horizontal.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * in.at(x + i, y);
      horizontal.at(x, y) = acc;
    }
  }
  Plane out{horizontal.width, in.height - k + 1, {}};
  out.data.resize(static_cast<size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * horizontal.at(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

Plane Product(const Plane& a, const Plane& b) {
  Plane out{a.width, a.height, std::vector<double>(a.data.size())};
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

struct SsimMeans {
  double ssim;           // mean of l * cs
  double contrast_structure;  // mean of cs
};

SsimMeans ComputeSsimMeans(const Plane& a, const Plane& b,
                           const std::vector<double>& kernel,
                           const MsSsimParams& params) {
  const Plane mu_a = FilterValid(a, kernel);
  const Plane mu_b = FilterValid(b, kernel);
  const Plane e_aa = FilterValid(Product(a, a), kernel);
  const Plane e_bb = FilterValid(Product(b, b), kernel);
  const Plane e_ab = FilterValid(Product(a, b), kernel);
  const double c1 = params.c1();
  const double c2 = params.c2();
  double ssim_sum = 0.0;
  double cs_sum = 0.0;
  for (size_t i = 0; i < mu_a.data.size(); ++i) {
    const double ma = mu_a.data[i];
    const double mb = mu_b.data[i];
    const double var_a = e_aa.data[i] - ma * ma;
    const double var_b = e_bb.data[i] - mb * mb;
    const double cov = e_ab.data[i] - ma * mb;
    const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
    const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    ssim_sum += l * cs;
    cs_sum += cs;
  }
  const double n = static_cast<double>(mu_a.data.size());
  return {ssim_sum / n, cs_sum / n};
}

// 2x2 box average, then keep every second sample; odd trailing rows/columns
// are dropped.
Plane Downsample(const Plane& in) {
  Plane out{in.width / 2, in.height / 2, {}};
  out.data.resize(static_cast<size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.at(x, y) = 0.25 * (in.at(2 * x, 2 * y) + in.at(2 * x + 1, 2 * y) +
                             in.at(2 * x, 2 * y + 1) +
                             in.at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

bool IsIdentical(const LumaImage& a, const LumaImage& b) {
  return std::equal(a.samples().begin(), a.samples().end(),
                    b.samples().begin());
}

}  // namespace

std::string_view MetricName(MetricId id) {
  switch (id) {
    case MetricId::kMse: return "MSE";
    case MetricId::kPsnr: return "PSNR";
    case MetricId::kSsim: return "SSIM";
    case MetricId::kMsSsimY: return "MS_SSIM_Y";
    case MetricId::kLpips: return "LPIPS";
  }
  return "?";
}

bool MetricValue::is_infinite() const { return std::isinf(value); }

std::string FormatValue(const MetricValue& v) {
  if (v.is_infinite()) return "inf";
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << v.value;
  return out.str();
}

void MsSsimParams::Validate() const {
  if (scales < 1 || static_cast<int>(scale_weights.size()) != scales) {
    throw Error(ErrorCode::kInvalidArgument,
                "MS-SSIM needs one weight per scale");
  }
  const double total =
      std::accumulate(scale_weights.begin(), scale_weights.end(), 0.0);
  // The published five-scale weights sum to 1.0001, so the check is loose
  // enough to accept them unmodified.
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                "MS-SSIM scale weights must sum to 1");
  }
  if (window_size < 1 || window_size % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "SSIM window size must be odd and positive");
  }
  if (!(window_sigma > 0.0) || !(peak > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "SSIM sigma and peak must be positive");
  }
}

MetricValue Mse(const RasterImage& a, const RasterImage& b) {
  RequireSameSize(a, b);
  return {MetricId::kMse, MeanSquaredDifference(a.samples(), b.samples())};
}

MetricValue Mse(const LumaImage& a, const LumaImage& b) {
  RequireSameSize(a, b);
  return {MetricId::kMse, MeanSquaredDifference(a.samples(), b.samples())};
}

MetricValue PsnrFromMse(double mse, double peak) {
  if (mse < 0.0 || std::isnan(mse)) {
    throw Error(ErrorCode::kInvalidArgument, "MSE must be non-negative");
  }
  if (mse == 0.0) {
    return {MetricId::kPsnr, std::numeric_limits<double>::infinity()};
  }
  return {MetricId::kPsnr, 10.0 * std::log10(peak * peak / mse)};
}

MetricValue Psnr(const RasterImage& a, const RasterImage& b) {
  return PsnrFromMse(Mse(a, b).value);
}

MetricValue Psnr(const LumaImage& a, const LumaImage& b) {
  return PsnrFromMse(Mse(a, b).value);
}

MetricValue SsimSingle(const LumaImage& a, const LumaImage& b,
                       const MsSsimParams& params) {
  params.Validate();
  RequireSameSize(a, b);
  if (a.width() < params.window_size || a.height() < params.window_size) {
    throw Error(ErrorCode::kTooSmall,
                "image is smaller than the " +
                    std::to_string(params.window_size) + "-pixel SSIM window");
  }
  if (IsIdentical(a, b)) return {MetricId::kSsim, 1.0};
  const auto kernel = GaussianKernel(params.window_size, params.window_sigma);
  return {MetricId::kSsim,
          ComputeSsimMeans(FromLuma(a), FromLuma(b), kernel, params).ssim};
}

MetricValue MsSsimY(const LumaImage& a, const LumaImage& b,
                    const MsSsimParams& params) {
  params.Validate();
  RequireSameSize(a, b);
  const int min_side = params.MinimumSide();
  if (std::min(a.width(), a.height()) < min_side) {
    throw Error(ErrorCode::kTooSmall,
                "MS-SSIM with " + std::to_string(params.scales) +
                    " scales needs both sides >= " + std::to_string(min_side));
  }
  if (IsIdentical(a, b)) return {MetricId::kMsSsimY, 1.0};

  const auto kernel = GaussianKernel(params.window_size, params.window_sigma);
  Plane pa = FromLuma(a);
  Plane pb = FromLuma(b);
  double result = 1.0;
  for (int scale = 0; scale < params.scales; ++scale) {
    const SsimMeans means = ComputeSsimMeans(pa, pb, kernel, params);
    const bool coarsest = scale == params.scales - 1;
    // Negative means would make the fractional power undefined.
    const double term =
        std::max(coarsest ? means.ssim : means.contrast_structure, 0.0);
    result *= std::pow(term, params.scale_weights[scale]);
    if (!coarsest) {
      pa = Downsample(pa);
      pb = Downsample(pb);
    }
  }
  return {MetricId::kMsSsimY, result};
}

void ExternalMetricTable::Insert(const std::string& key,
                                 const std::string& metric, double value) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kNonFinite,
                "non-finite value for " + key + "/" + metric);
  }
  if (!values_.emplace(std::make_pair(key, metric), value).second) {
    throw Error(ErrorCode::kDuplicate,
                "duplicate metric row for " + key + "/" + metric);
  }
}

std::optional<double> ExternalMetricTable::Lookup(
    const std::string& key, const std::string& metric) const {
  auto it = values_.find({key, metric});
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ExternalMetricTable::Keys() const {
  std::vector<std::string> keys;
  for (const auto& [k, v] : values_) {
    if (keys.empty() || keys.back() != k.first) keys.push_back(k.first);
  }
  return keys;
}

ExternalMetricTable ParseExternalMetrics(std::string_view text) {
  ExternalMetricTable table;
  internal::ForEachCsvRecord(
      text, "key,metric,value", 3,
      [&](size_t line_no, std::span<const std::string_view> fields) {
        if (fields[0].empty() || fields[1].empty()) {
          throw Error(ErrorCode::kParse, "external metrics line " +
                                             std::to_string(line_no) +
                                             ": empty key or metric");
        }
        table.Insert(std::string(fields[0]), std::string(fields[1]),
                     internal::ParseDoubleField(fields[2], line_no));
      });
  return table;
}

ExternalMetricTable LoadExternalMetrics(const std::filesystem::path& path) {
  return ParseExternalMetrics(
      internal::ReadTextFile(path, "external metrics"));
}

}  // namespace fidelity::metrics
