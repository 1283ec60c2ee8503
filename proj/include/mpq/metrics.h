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

#ifndef MPQ_METRICS_H_
#define MPQ_METRICS_H_

#include <string>

#include "mpq/tensor.h"

namespace mpq {

inline constexpr double kDefaultSqnrCapDb = 100.0;

enum class MetricKind { kSsim, kSqnrDb };

const char* MetricKindName(MetricKind kind);
MetricKind ParseMetricKind(const std::string& name);

struct MetricScore {
  double value = 0.0;
  MetricKind kind = MetricKind::kSsim;
};

// Exponents on the luminance, contrast and structure terms plus the two
// stabilizers. c1 = c2 = 0 gives the unstabilized index.
struct SsimWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;

  // Stabilizers c1 = (0.01 L)^2, c2 = (0.03 L)^2 for a dynamic range L.
  static SsimWeights ForDynamicRange(double range);
};

struct SsimComponents {
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;
};

// Global-window statistics: the whole tensor is one window. Means and
// (co)variances are population statistics.
SsimComponents SsimTerms(const Tensor& x, const Tensor& y,
                         const SsimWeights& w);
MetricScore Ssim(const Tensor& x, const Tensor& y, const SsimWeights& w);

// SSIM with stabilizers derived from the joint range of x and y. A joint
// range of zero falls back to L = 1.
MetricScore SsimStabilized(const Tensor& x, const Tensor& y);

// 10 log10(|ref|^2 / |ref - test|^2), capped at cap_db. Zero noise returns
// the cap.
MetricScore SqnrDb(const Tensor& reference, const Tensor& test,
                   double cap_db = kDefaultSqnrCapDb);

}  // namespace mpq

#endif  // MPQ_METRICS_H_
