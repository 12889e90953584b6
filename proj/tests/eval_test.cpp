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

#include <algorithm>
#include <filesystem>
#include <vector>

#include "miadip/eval.hpp"

namespace miadip {
namespace {

ExperimentConfig SmallConfig() {
  ExperimentConfig c;
  c.task.dim = 16;
  c.task.source_classes = 6;
  c.task.target_classes = 3;
  c.task.source_n = 1200;
  c.task.target_train_n = 24;
  c.task.target_eval_n = 200;
  c.hidden = {16, 8};
  c.source.epochs = 3;
  c.transfer.epochs = 30;
  c.attack.eval_members = 16;
  c.attack.budget.hsj.grad_probes = 16;
  c.attack.budget.hsj.max_rounds = 4;
  c.attack.budget.hsj.max_queries = 400;
  c.attack.budget.bim.max_iters = 300;
  c.attack.budget.bim.alpha = 0.02;
  return c;
}

TEST(AccuracyTest, HandFixture) {
  // Logit difference x0 - x1; class 0 iff x0 >= x1.
  DenseLayer layer;
  layer.weights.resize(2, 2);
  layer.weights << 1.0, 0.0, 0.0, 1.0;
  layer.bias = Vector::Zero(2);
  Network net;
  net.layers.push_back(layer);
  SampleSet s;
  s.num_classes = 2;
  s.features.resize(10, 2);
  s.features << 1, 0, 2, 1, 3, 0, 0, 1, 0, 2, 1, 3, 5, 4, 0, 9, 1, 1, 2, 2;
  // Predictions: 0 0 0 1 1 1 0 1 0 0.
  s.labels = {0, 0, 1, 1, 1, 0, 0, 0, 0, 1};
  s.membership.assign(10, 0);
  EXPECT_DOUBLE_EQ(ClassificationAccuracy(net, s), 0.6);
  EXPECT_THROW(ClassificationAccuracy(net, SampleSet{}), MetricError);
}

TEST(AccuracyTest, ConstantClassifierScoresOneOverC) {
  DenseLayer layer;
  layer.weights = Matrix::Zero(4, 3);
  layer.bias = Vector::Zero(4);
  layer.bias(2) = 1.0;
  Network net;
  net.layers.push_back(layer);
  Rng rng = MakeRng(1);
  SampleSet s;
  s.num_classes = 4;
  s.features = GaussianMatrix(400, 3, 1.0, rng);
  for (int i = 0; i < 400; ++i) s.labels.push_back(i % 4);
  s.membership.assign(400, 0);
  EXPECT_DOUBLE_EQ(ClassificationAccuracy(net, s), 0.25);
}

TEST(ExperimentTest, ReportIsSelfConsistent) {
  for (Variant v : {Variant::kNtl, Variant::kTl}) {
    ExperimentConfig c = SmallConfig();
    c.variant = v;
    const ExperimentReport r = RunExperiment(c);
    EXPECT_TRUE(r.SelfConsistent());
    EXPECT_EQ(r.bim_records.size(), 32u);
    EXPECT_EQ(r.hsj_records.size(), 32u);
    EXPECT_EQ(r.n, 24);
    EXPECT_EQ(r.frozen_layers, v == Variant::kTl ? 2 : 0);
    EXPECT_DOUBLE_EQ(r.gap, r.train_acc - r.acc);
    EXPECT_EQ(r.acc, r.stage1_acc);  // no smoothing
    std::int64_t q = 0;
    for (const auto& rec : r.bim_records) q += rec.estimate.queries_used;
    for (const auto& rec : r.hsj_records) q += rec.estimate.queries_used;
    EXPECT_EQ(r.queries_total, q);
    // The member rule reproduces the stored counts.
    std::vector<std::uint8_t> pred, truth;
    for (const auto& rec : r.hsj_records) {
      pred.push_back(PredictMemberByDistance(rec.estimate.delta_hat, r.hsj.best.tau));
      truth.push_back(rec.true_member);
    }
    EXPECT_EQ(CountConfusion(pred, truth), r.hsj.counts);
    const RunConfig parsed = ParseRunConfig(r.config_text);
    EXPECT_EQ(parsed.sweep.variants, std::vector<Variant>{v});
    EXPECT_EQ(parsed.sweep.seeds, std::vector<std::uint64_t>{0});
  }
}

TEST(ExperimentTest, ShadowThresholdIsReported) {
  ExperimentConfig c = SmallConfig();
  c.variant = Variant::kNtl;
  c.attack.shadow = true;
  c.attack.threshold = ThresholdMode::kShadow;
  const ExperimentReport r = RunExperiment(c);
  ASSERT_TRUE(r.bim.shadow.has_value());
  ASSERT_TRUE(r.entropy.shadow.has_value());
  EXPECT_EQ(r.bim.counts, r.bim.shadow->counts);
  EXPECT_LE(r.bim.asr(), r.bim.best.asr());
  EXPECT_TRUE(r.SelfConsistent());
}

TEST(ExperimentTest, TunedSigmaComesFromCandidates) {
  ExperimentConfig c = SmallConfig();
  c.variant = Variant::kNtl;
  c.smoothing.tune = true;
  c.smoothing.candidates = {0.0, 0.3};
  c.smoothing.num_samples = 8;
  const ExperimentReport r = RunExperiment(c);
  ASSERT_TRUE(r.tuning.has_value());
  EXPECT_TRUE(r.sigma == 0.0 || r.sigma == 0.3);
  EXPECT_EQ(r.tuning->sigma, r.sigma);
  EXPECT_EQ(r.stage1_acc, r.model.eval_accuracy);
}

TEST(SweepTest, SingleCellMatchesRunExperiment) {
  RunConfig rc;
  rc.experiment = SmallConfig();
  rc.sweep.variants = {Variant::kTl};
  rc.sweep.m_fracs = {0.5};
  rc.sweep.n_sizes = {24};
  rc.sweep.sigmas = {0.0};
  rc.sweep.seeds = {3};
  const SweepResult s = RunSweep(rc);
  ASSERT_EQ(s.reports.size(), 1u);
  ExperimentConfig c = SmallConfig();
  c.variant = Variant::kTl;
  c.m_frac = 0.5;
  c.seed = 3;
  const ExperimentReport r = RunExperiment(c);
  ResultRow a = s.Rows()[0];
  ResultRow b = RowFromReport(0, r);
  a.wall_ms = b.wall_ms = 0.0;
  EXPECT_EQ(ResultsCsv({a}), ResultsCsv({b}));
  EXPECT_EQ(s.reports[0].config_text, r.config_text);
}

TEST(SweepTest, CachesSourceAndRecordsFailures) {
  RunConfig rc;
  rc.experiment = SmallConfig();
  rc.experiment.transfer.epochs = 5;
  rc.experiment.attack.hsj = false;
  rc.sweep.variants = {Variant::kNtl, Variant::kTl};
  rc.sweep.m_fracs = {0.0, 1.0};
  rc.sweep.n_sizes = {24, 1};  // N=1 is invalid for 3 classes
  rc.sweep.seeds = {0, 1};
  const std::vector<SweepCell> cells = ExpandGrid(rc);
  EXPECT_EQ(cells.size(), 12u);  // (1 + 2) * 2 * 2
  const SweepResult s = RunSweep(rc, RunOptions{2, std::nullopt, nullptr});
  EXPECT_EQ(s.reports.size(), 6u);
  EXPECT_EQ(s.failures.size(), 6u);
  EXPECT_EQ(s.source_trainings, 2);  // one per seed
  for (const SweepFailure& f : s.failures) {
    EXPECT_NE(f.message.find("target_train_n"), std::string::npos) << f.message;
  }
  EXPECT_TRUE(std::is_sorted(s.cell_ids.begin(), s.cell_ids.end()));
}

TEST(ResultsTest, CsvRoundTripAndSummary) {
  std::vector<ResultRow> rows(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].cell_id = i;
    rows[i].variant = "tl";
    rows[i].m_frac = 0.5;
    rows[i].n = 64;
    rows[i].seed = i;
    rows[i].asr_bim = 0.5 + 0.1 * static_cast<double>(i);
    rows[i].asr_entropy = 0.6;
    rows[i].acc = 0.25 * static_cast<double>(i);
    rows[i].queries_total = 10;
    rows[i].wall_ms = 1.5;
  }
  rows[3].variant = "ntl";
  const std::string csv = ResultsCsv(rows);
  EXPECT_EQ(ResultsCsv(ParseResultsCsv(csv)), csv);
  const auto summary = Summarize(ParseResultsCsv(csv));
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0].seeds, 3);
  EXPECT_NEAR(summary[0].asr_bim, 0.6, 1e-12);
  EXPECT_NEAR(summary[0].acc, 0.25, 1e-12);
  EXPECT_TRUE(std::isnan(summary[0].asr_hsj));
  EXPECT_NE(SummaryTable(summary).find("ntl"), std::string::npos);
  EXPECT_THROW(ParseResultsCsv(""), ParseError);
  EXPECT_TRUE(ParseResultsCsv(std::string(kResultsHeader) + "\n").empty());
  EXPECT_THROW(ParseResultsCsv("a,b\n"), ParseError);
}

TEST(PersistTest, WritesArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "miadip_eval_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = SmallConfig();
  c.variant = Variant::kNtl;
  RunOptions opts;
  opts.out_dir = dir;
  RunExperiment(c, opts);
  for (const char* f : {"model.json", "model.meta.json", "records_bim.csv", "records_hsj.csv",
                        "report.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto report = nlohmann::json::parse(ReadTextFile(dir / "report.json"));
  EXPECT_TRUE(report.contains("config"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace miadip
