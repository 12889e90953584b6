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

#include <cmath>
#include <vector>

#include "miadip/smooth.hpp"

namespace miadip {
namespace {

Network RandomNet(std::uint64_t seed) {
  Network net = MakeNetwork(Architecture{6, {10, 7}, 4}, seed);
  Rng rng = MakeRng(seed, {1});
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = Uniform(rng, -0.3, 0.3);
  }
  return net;
}

// Two-class linear network whose logit difference is w.x + b.
Network LinearNet(const Vector& w, double b) {
  DenseLayer layer;
  layer.weights.resize(2, w.size());
  layer.weights.row(0) = 0.5 * w.transpose();
  layer.weights.row(1) = -0.5 * w.transpose();
  layer.bias = Vector(2);
  layer.bias << 0.5 * b, -0.5 * b;
  layer.activation = Activation::kIdentity;
  Network net;
  net.layers.push_back(layer);
  return net;
}

SmoothingConfig Cfg(double sigma, int s = 32, std::uint64_t seed = 7) {
  SmoothingConfig c;
  c.sigma = sigma;
  c.num_samples = s;
  c.master_seed = seed;
  return c;
}

TEST(SmoothedClassifierTest, ZeroSigmaMatchesBaseArgmaxBitwise) {
  const Network net = RandomNet(1);
  const SmoothedClassifier sc(net, Cfg(0.0));
  Rng rng = MakeRng(2);
  const Matrix x = GaussianMatrix(1000, 6, 2.0, rng);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Vector logits = Forward(net, RowSpan(x, r));
    int want = 0;
    for (int k = 1; k < 4; ++k) {
      if (logits(k) > logits(want)) want = k;
    }
    ASSERT_EQ(sc.Predict(RowSpan(x, r), static_cast<std::uint64_t>(r)), want);
    const Vector p = sc.PredictProba(RowSpan(x, r), static_cast<std::uint64_t>(r));
    const Vector soft = Softmax(logits);
    for (int k = 0; k < 4; ++k) ASSERT_EQ(p(k), soft(k));
  }
}

TEST(SmoothedClassifierTest, SingleDrawEqualsBaseOnTheFirstNoiseVector) {
  const Network net = RandomNet(3);
  const SmoothedClassifier sc(net, Cfg(0.7, 1));
  Rng rng = MakeRng(4);
  const Matrix x = GaussianMatrix(200, 6, 1.0, rng);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto key = static_cast<std::uint64_t>(r);
    const Matrix noise = sc.NoiseDraws(key);
    ASSERT_EQ(noise.rows(), 1);
    Matrix shifted = x.row(r) + noise.row(0);
    EXPECT_EQ(sc.Predict(RowSpan(x, r), key), PredictLabel(net, RowSpan(shifted, 0)));
  }
}

TEST(SmoothedClassifierTest, NoiseStreamHasRequestedScaleAndIsKeyed) {
  const SmoothedClassifier sc(RandomNet(5), Cfg(0.5, 4000));
  const Matrix a = sc.NoiseDraws(11);
  const double var = a.array().square().mean();
  EXPECT_NEAR(std::sqrt(var), 0.5, 0.01);
  EXPECT_EQ(a, sc.NoiseDraws(11));
  EXPECT_NE(a, sc.NoiseDraws(12));
  EXPECT_EQ(a, sc.NoiseDraws(11, 99));  // per-sample mode ignores the query index
  SmoothingConfig fresh = Cfg(0.5, 8);
  fresh.noise_mode = NoiseMode::kFresh;
  const SmoothedClassifier fc(RandomNet(5), fresh);
  EXPECT_NE(fc.NoiseDraws(11, 0), fc.NoiseDraws(11, 1));
}

TEST(SmoothedClassifierTest, LargeMarginPointsKeepTheirLabel) {
  Vector w(5);
  w << 1.0, -2.0, 0.5, 0.0, 1.5;
  const double b = 0.3;
  const double sigma = 0.2;
  const Network net = LinearNet(w, b);
  const SmoothedClassifier sc(net, Cfg(sigma, 64, 3));
  Rng rng = MakeRng(8);
  int agree = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Vector x(5);
    for (int i = 0; i < 5; ++i) x(i) = StandardNormal(rng);
    // Push x along w so its distance to the boundary is at least 4 sigma.
    const double margin = (w.dot(x) + b) / w.norm();
    const double target = (margin >= 0 ? 1.0 : -1.0) * (4.0 * sigma + std::abs(Uniform(rng, 0, 1)));
    x += (target - margin) * w / w.norm();
    const std::span<const double> xs(x.data(), 5);
    agree += sc.Predict(xs, static_cast<std::uint64_t>(t)) == PredictLabel(net, xs);
  }
  EXPECT_EQ(agree, trials);
}

TEST(SmoothedClassifierTest, ProbabilitiesAreDistributionsConsistentWithPredict) {
  for (Aggregation agg : {Aggregation::kSoftAverage, Aggregation::kMajorityVote}) {
    SmoothingConfig c = Cfg(0.8, 17);
    c.aggregation = agg;
    const SmoothedClassifier sc(RandomNet(6), c);
    Rng rng = MakeRng(9);
    const Matrix x = GaussianMatrix(300, 6, 1.0, rng);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto key = static_cast<std::uint64_t>(r);
      const Vector p = sc.PredictProba(RowSpan(x, r), key);
      EXPECT_NEAR(p.sum(), 1.0, 1e-9);
      EXPECT_GE(p.minCoeff(), 0.0);
      EXPECT_LE(p.maxCoeff(), 1.0);
      EXPECT_EQ(sc.Predict(RowSpan(x, r), key), Argmax(p));
      EXPECT_EQ(sc.Predict(RowSpan(x, r), key), sc.Predict(RowSpan(x, r), key));
    }
  }
}

TEST(SmoothedClassifierTest, LossGradientMatchesFiniteDifferences) {
  const SmoothedClassifier sc(RandomNet(10), Cfg(0.4, 8));
  Rng rng = MakeRng(12);
  const Matrix x = GaussianMatrix(5, 6, 1.0, rng);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto key = static_cast<std::uint64_t>(r);
    const Vector g = sc.LossGradient(RowSpan(x, r), 1, key);
    for (int i = 0; i < 6; ++i) {
      Vector up = x.row(r).transpose(), down = up;
      up(i) += 1e-5;
      down(i) -= 1e-5;
      const double lu = -std::log(sc.PredictProba({up.data(), 6}, key)(1));
      const double ld = -std::log(sc.PredictProba({down.data(), 6}, key)(1));
      EXPECT_NEAR(g(i), (lu - ld) / 2e-5, 1e-6 + 1e-4 * std::abs(g(i)));
    }
  }
}

TEST(SmoothedClassifierTest, RejectsBadInputsAndConfigs) {
  EXPECT_THROW(SmoothedClassifier(RandomNet(1), Cfg(-1.0)), ConfigError);
  EXPECT_THROW(SmoothedClassifier(RandomNet(1), Cfg(0.1, 0)), ConfigError);
  const SmoothedClassifier sc(RandomNet(1), Cfg(0.1));
  std::vector<double> x(6, 0.0);
  x[2] = NAN;
  EXPECT_THROW(sc.Predict(x, 0), NumericError);
  EXPECT_THROW(sc.Predict(std::vector<double>(5, 0.0), 0), ShapeError);
}

std::vector<SigmaMeasurement> Table(std::initializer_list<SigmaMeasurement> rows) { return rows; }

auto Lookup(const std::vector<SigmaMeasurement>& table) {
  return [table](double s) {
    for (const auto& m : table) {
      if (m.sigma == s) return m;
    }
    ADD_FAILURE() << "unexpected sigma " << s;
    return SigmaMeasurement{s, 1.0, 0.0};
  };
}

TEST(TuneSigmaTest, OnlyZeroCandidate) {
  const std::vector<double> c = {0.0};
  const SigmaSelection s = TuneSigma(c, Lookup(Table({{0.0, 0.8, 0.9}})));
  EXPECT_EQ(s.sigma, 0.0);
  EXPECT_FALSE(s.flagged);
}

TEST(TuneSigmaTest, AccuracyFloorExcludesCollapsedSigma) {
  const std::vector<double> c = {1e3, 0.0};
  const SigmaSelection s = TuneSigma(c, Lookup(Table({{0.0, 0.8, 0.9}, {1e3, 0.5, 0.25}})));
  EXPECT_EQ(s.sigma, 0.0);
  EXPECT_DOUBLE_EQ(s.accuracy_floor, 0.88);
  ASSERT_EQ(s.table.size(), 2u);
  EXPECT_EQ(s.table[0].sigma, 0.0);
}

TEST(TuneSigmaTest, LowestAsrWithinFloorAndTiesGoToSmallerSigma) {
  const std::vector<double> c = {0.0, 0.1, 0.2, 0.4, 0.2};
  const SigmaSelection s = TuneSigma(
      c, Lookup(Table({{0.0, 0.8, 0.9}, {0.1, 0.6, 0.89}, {0.2, 0.6, 0.885}, {0.4, 0.5, 0.85}})));
  EXPECT_EQ(s.sigma, 0.1);
  EXPECT_EQ(s.table.size(), 4u);
}

TEST(TuneSigmaTest, ExactToleranceDropStillQualifies) {
  const std::vector<double> c = {0.0, 0.3};
  const SigmaSelection s =
      TuneSigma(c, Lookup(Table({{0.0, 0.7, 0.5}, {0.3, 0.55, 0.48}})), 0.02);
  EXPECT_EQ(s.sigma, 0.3);
}

TEST(TuneSigmaTest, MeasuresZeroWhenMissingAndFlagsWhenNothingQualifies) {
  const std::vector<double> c = {0.5, 1.0};
  const SigmaSelection s = TuneSigma(
      c, Lookup(Table({{0.0, 0.8, 0.9}, {0.5, 0.6, 0.5}, {1.0, 0.5, 0.4}})));
  EXPECT_EQ(s.sigma, 0.0);
  EXPECT_TRUE(s.flagged);
  EXPECT_THROW(TuneSigma(std::vector<double>{}, Lookup({})), ConfigError);
  EXPECT_THROW(TuneSigma(std::vector<double>{-0.1}, Lookup({})), ConfigError);
}

}  // namespace
}  // namespace miadip
