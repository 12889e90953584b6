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

#include <string>

#include "miadip/config.hpp"
#include "miadip/plot.hpp"

namespace miadip {
namespace {

std::string ErrorOf(const std::string& text) {
  try {
    ParseRunConfig(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, DefaultsRoundTrip) {
  const std::string text = RunConfigToText(RunConfig{});
  EXPECT_EQ(RunConfigToText(ParseRunConfig(text)), text);
  EXPECT_EQ(RunConfigToText(ParseRunConfig("")), text);
}

TEST(ConfigTest, EditedValuesRoundTrip) {
  const std::string src =
      "[task]\ndim = 32\noverlap = 0.4\n"
      "[model]\nhidden = [8, 4]\n"
      "[transfer]\nvariant = \"l2\"\nlambda = 0.01\n"
      "[smoothing]\ntune = true\ncandidates = [0, 0.5]\naggregation = \"vote\"\n"
      "[attack]\nhsj_max_queries = 77\n"
      "[sweep]\nvariants = [\"ntl\", \"selena\"]\nseeds = [4]\n"
      "[run]\njobs = 3\n";
  const RunConfig c = ParseRunConfig(src);
  EXPECT_EQ(c.experiment.task.dim, 32);
  EXPECT_EQ(c.experiment.hidden, (std::vector<int>{8, 4}));
  EXPECT_EQ(c.experiment.variant, Variant::kL2);
  EXPECT_EQ(c.experiment.smoothing.candidates, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(c.experiment.smoothing.aggregation, Aggregation::kMajorityVote);
  EXPECT_EQ(c.experiment.attack.budget.hsj.max_queries, 77);
  EXPECT_EQ(c.sweep.variants, (std::vector<Variant>{Variant::kNtl, Variant::kSelena}));
  EXPECT_EQ(c.jobs, 3);
  const std::string text = RunConfigToText(c);
  EXPECT_EQ(RunConfigToText(ParseRunConfig(text)), text);
}

TEST(ConfigTest, UnknownKeyNamesNearest) {
  EXPECT_NE(ErrorOf("[task]\noverlapp = 1\n").find("nearest valid name is 'task.overlap'"),
            std::string::npos);
  EXPECT_NE(ErrorOf("[smoothing]\nsigmaa = 1\n").find("'smoothing.sigma'"), std::string::npos);
  EXPECT_NE(ErrorOf("[atack]\nbim = true\n").find("'attack.bim'"), std::string::npos);
}

TEST(ConfigTest, RejectsBadValues) {
  for (const char* bad : {
           "[task]\ndim = abc\n",
           "[task]\noverlap = 1.5\n",
           "[transfer]\nm_frac = -0.1\n",
           "[transfer]\nvariant = \"xfer\"\n",
           "[attack]\nbim_alpha = 0\n",
           "[attack]\nthreshold = \"shadow\"\n",
           "[smoothing]\nnum_samples = 0\n",
           "[smoothing]\ntune = maybe\n",
           "[model]\nhidden = []\n",
           "[run]\njobs = 0\n",
           "[task\ndim = 3\n",
       }) {
    EXPECT_THROW(ParseRunConfig(bad), ConfigError) << bad;
  }
}

TEST(ConfigTest, FrozenLayersFromFraction) {
  ExperimentConfig c;
  c.m_frac = 0.0;
  EXPECT_EQ(c.FrozenLayers(), 0);
  c.m_frac = 0.5;
  EXPECT_EQ(c.FrozenLayers(), 1);
  c.m_frac = 1.0;
  EXPECT_EQ(c.FrozenLayers(), 2);
}

TEST(PlotTest, SvgIsWellFormed) {
  std::vector<SummaryRow> rows(3);
  rows[0] = {"ntl", 0.0, 64, 0.0, 5, 0.9, 0.92, 0.8, 0.55, 1.0, 0.45};
  rows[1] = {"tl", 0.5, 64, 0.0, 5, 0.7, 0.72, NAN, 0.8, 1.0, 0.2};
  rows[2] = {"tl", 1.0, 64, 0.0, 5, 0.6, 0.61, NAN, 0.85, 1.0, 0.15};
  const SweepPlots p = PlotSummary(rows);
  for (const std::string* svg : {&p.asr_vs_m, &p.acc_vs_m, &p.asr_vs_sigma, &p.bars}) {
    EXPECT_EQ(svg->rfind("<svg", 0), 0u);
    EXPECT_NE(svg->find("</svg>"), std::string::npos);
    EXPECT_EQ(svg->find("nan"), std::string::npos);
  }
  EXPECT_NE(p.asr_vs_m.find("<polyline"), std::string::npos);
  EXPECT_NE(p.bars.find("<rect"), std::string::npos);
  const std::string escaped = LinePlotSvg("a<b & c", "x", "y", {});
  EXPECT_NE(escaped.find("a&lt;b &amp; c"), std::string::npos);
}

}  // namespace
}  // namespace miadip
