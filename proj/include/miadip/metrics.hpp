// Copyright 2026 The miadip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Confusion counts and the membership-attack success metrics built on them.
// All ratios are formed from integer counts and rounded once.

#ifndef MIADIP_METRICS_HPP_
#define MIADIP_METRICS_HPP_

#include <cstdint>
#include <span>
#include <string>

#include "miadip/core.hpp"

namespace miadip {

class MetricError : public Error {
 public:
  using Error::Error;
};

struct ConfusionCounts {
  std::int64_t tp = 0;  // member predicted member
  std::int64_t fn = 0;  // member predicted nonmember
  std::int64_t tn = 0;  // nonmember predicted nonmember
  std::int64_t fp = 0;  // nonmember predicted member

  std::int64_t positives() const { return tp + fn; }
  std::int64_t negatives() const { return tn + fp; }

  // ASR * 2PN, an exact integer; comparisons between thresholds use this.
  std::int64_t AsrNumerator() const { return tp * negatives() + tn * positives(); }

  double tpr() const { return static_cast<double>(tp) / static_cast<double>(positives()); }
  double tnr() const { return static_cast<double>(tn) / static_cast<double>(negatives()); }
  double asr() const {
    return static_cast<double>(AsrNumerator()) /
           static_cast<double>(2 * positives() * negatives());
  }

  bool operator==(const ConfusionCounts&) const = default;
};

struct ConfusionMetrics {
  double tpr = 0.0;
  double tnr = 0.0;
  double asr = 0.0;
  ConfusionCounts counts;
};

inline ConfusionCounts CountConfusion(std::span<const std::uint8_t> predictions,
                                      std::span<const std::uint8_t> truths) {
  if (predictions.size() != truths.size()) {
    throw MetricError("prediction count " + std::to_string(predictions.size()) +
                      " != truth count " + std::to_string(truths.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i]) {
      (predictions[i] ? c.tp : c.fn) += 1;
    } else {
      (predictions[i] ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

inline ConfusionMetrics MetricsFromCounts(const ConfusionCounts& c) {
  if (c.positives() == 0 || c.negatives() == 0) {
    throw MetricError("membership truth must contain both members and nonmembers");
  }
  return {c.tpr(), c.tnr(), c.asr(), c};
}

inline ConfusionMetrics ComputeConfusionMetrics(std::span<const std::uint8_t> predictions,
                                                std::span<const std::uint8_t> truths) {
  return MetricsFromCounts(CountConfusion(predictions, truths));
}

}  // namespace miadip

#endif  // MIADIP_METRICS_HPP_
