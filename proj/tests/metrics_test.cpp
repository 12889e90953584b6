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

#include <gtest/gtest.h>

#include <cstdint>
#include <vector>

#include "miadip/metrics.hpp"
#include "oracles.hpp"

namespace miadip {
namespace {

TEST(ConfusionTest, CraftedTables) {
  for (const oracle::ConfusionTable& t : oracle::kConfusionTables) {
    std::vector<std::uint8_t> pred, truth;
    oracle::ExpandTable(t, pred, truth);
    const ConfusionMetrics m = ComputeConfusionMetrics(pred, truth);
    EXPECT_EQ(m.counts, (ConfusionCounts{t.tp, t.fn, t.tn, t.fp}));
    // Both sides round the same rational, so equality is exact.
    EXPECT_EQ(m.tpr, static_cast<double>(t.tpr_num) / static_cast<double>(t.tpr_den));
    EXPECT_EQ(m.tnr, static_cast<double>(t.tnr_num) / static_cast<double>(t.tnr_den));
    EXPECT_EQ(m.asr, static_cast<double>(t.asr_num) / static_cast<double>(t.asr_den));
    const std::int64_t p = t.tp + t.fn, n = t.tn + t.fp;
    EXPECT_EQ(m.counts.AsrNumerator() * t.asr_den, t.asr_num * 2 * p * n);
  }
}

TEST(ConfusionTest, DegenerateRules) {
  std::vector<std::uint8_t> truth = {1, 1, 0, 0};
  EXPECT_EQ(ComputeConfusionMetrics(std::vector<std::uint8_t>{1, 1, 1, 1}, truth).asr, 0.5);
  EXPECT_EQ(ComputeConfusionMetrics(std::vector<std::uint8_t>{0, 0, 0, 0}, truth).asr, 0.5);
  EXPECT_EQ(ComputeConfusionMetrics(truth, truth).asr, 1.0);
  EXPECT_EQ(ComputeConfusionMetrics(std::vector<std::uint8_t>{0, 0, 1, 1}, truth).asr, 0.0);
}

TEST(ConfusionTest, Errors) {
  const std::vector<std::uint8_t> ones = {1, 1, 1};
  EXPECT_THROW(ComputeConfusionMetrics(ones, ones), MetricError);
  const std::vector<std::uint8_t> zeros = {0, 0, 0};
  EXPECT_THROW(ComputeConfusionMetrics(ones, zeros), MetricError);
  EXPECT_THROW(ComputeConfusionMetrics(std::vector<std::uint8_t>{1, 0},
                                       std::vector<std::uint8_t>{1, 0, 1}),
               MetricError);
  EXPECT_THROW(ComputeConfusionMetrics({}, {}), MetricError);
}

}  // namespace
}  // namespace miadip
