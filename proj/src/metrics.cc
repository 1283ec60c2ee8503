// Copyright 2026 The mpq Authors
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

#include "mpq/metrics.h"

#include <algorithm>
#include <cmath>

#include "mpq/error.h"

namespace mpq {
namespace {

double Ratio(double num, double den, const char* term) {
  if (den == 0.0) {
    throw Error(ErrorCode::kUndefinedMetric,
                std::string("ssim ") + term +
                    " term is 0/0; use non-zero stabilizers");
  }
  return num / den;
}

}  // namespace

const char* MetricKindName(MetricKind kind) {
  return kind == MetricKind::kSsim ? "SSIM" : "SQNR_dB";
}

MetricKind ParseMetricKind(const std::string& name) {
  if (name == "SSIM") return MetricKind::kSsim;
  if (name == "SQNR_dB") return MetricKind::kSqnrDb;
  throw Error(ErrorCode::kValidation, "unknown metric kind '" + name + "'");
}

SsimWeights SsimWeights::ForDynamicRange(double range) {
  SsimWeights w;
  w.c1 = (0.01 * range) * (0.01 * range);
  w.c2 = (0.03 * range) * (0.03 * range);
  return w;
}

SsimComponents SsimTerms(const Tensor& x, const Tensor& y,
                         const SsimWeights& w) {
  if (x.shape() != y.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "ssim: shapes " + ShapeToString(x.shape()) + " and " +
                    ShapeToString(y.shape()) + " differ");
  }
  if (w.c1 < 0.0 || w.c2 < 0.0) {
    throw Error(ErrorCode::kInvalidParameter, "ssim stabilizers must be >= 0");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cov = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double sx = std::sqrt(vx);
  const double sy = std::sqrt(vy);

  SsimComponents terms;
  terms.luminance = Ratio(2.0 * mx * my + w.c1, mx * mx + my * my + w.c1,
                          "luminance");
  terms.contrast = Ratio(2.0 * sx * sy + w.c2, vx + vy + w.c2, "contrast");
  terms.structure = Ratio(cov + w.c2 / 2.0, sx * sy + w.c2 / 2.0, "structure");
  return terms;
}

MetricScore Ssim(const Tensor& x, const Tensor& y, const SsimWeights& w) {
  if (w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0) {
    throw Error(ErrorCode::kInvalidParameter, "ssim exponents must be >= 0");
  }
  const SsimComponents t = SsimTerms(x, y, w);
  const double value = std::pow(t.luminance, w.alpha) *
                       std::pow(t.contrast, w.beta) *
                       std::pow(t.structure, w.gamma);
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kUndefinedMetric,
                "ssim is undefined for these exponents and inputs");
  }
  return {value, MetricKind::kSsim};
}

MetricScore SsimStabilized(const Tensor& x, const Tensor& y) {
  const MinMax rx = ReduceMinMax(x)[0];
  const MinMax ry = ReduceMinMax(y)[0];
  double range = std::max(rx.max, ry.max) - std::min(rx.min, ry.min);
  if (range == 0.0) range = 1.0;
  return Ssim(x, y, SsimWeights::ForDynamicRange(range));
}

MetricScore SqnrDb(const Tensor& reference, const Tensor& test, double cap_db) {
  if (reference.shape() != test.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "sqnr: shapes " + ShapeToString(reference.shape()) + " and " +
                    ShapeToString(test.shape()) + " differ");
  }
  if (!std::isfinite(cap_db)) {
    throw Error(ErrorCode::kInvalidParameter, "sqnr cap must be finite");
  }
  const double signal = L2NormSq(reference);
  if (signal == 0.0) {
    throw Error(ErrorCode::kUndefinedMetric,
                "sqnr undefined for an all-zero reference");
  }
  double noise = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    noise += d * d;
  }
  if (noise == 0.0) return {cap_db, MetricKind::kSqnrDb};
  return {std::min(cap_db, 10.0 * std::log10(signal / noise)),
          MetricKind::kSqnrDb};
}

}  // namespace mpq
