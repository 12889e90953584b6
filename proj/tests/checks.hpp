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

// Checks shared by the unit tests and the acceptance binary.

#ifndef MIADIP_TESTS_CHECKS_HPP_
#define MIADIP_TESTS_CHECKS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "miadip/core.hpp"
#include "miadip/data.hpp"
#include "miadip/network.hpp"
#include "oracles.hpp"

namespace checks {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsFloor = 1e-8;

struct FdReport {
  int checked = 0;
  int mismatches = 0;
  std::string first_mismatch;
};

// Central differences of the oracle loss against the analytic parameter and
// input gradients, for every coordinate.
inline FdReport FiniteDifferenceCheck(const miadip::Network& net, const miadip::Matrix& batch,
                                      const std::vector<int>& labels,
                                      const miadip::Regularizer& reg) {
  FdReport report;
  const miadip::GradientBundle g = miadip::LossAndGrads(net, batch, labels, reg);
  auto check = [&](double analytic, double& slot, const std::string& where) {
    const double saved = slot;
    slot = saved + kFdStep;
    const double up = oracle::Loss(net, batch, labels, reg);
    slot = saved - kFdStep;
    const double down = oracle::Loss(net, batch, labels, reg);
    slot = saved;
    const double numeric = (up - down) / (2.0 * kFdStep);
    ++report.checked;
    if (!oracle::Close(analytic, numeric, kFdRelTol, kFdAbsFloor)) {
      if (report.mismatches++ == 0) {
        report.first_mismatch = where + ": analytic " + std::to_string(analytic) + " numeric " +
                                std::to_string(numeric);
      }
    }
  };
  auto& mutable_net = const_cast<miadip::Network&>(net);
  for (int l = 0; l < net.num_layers(); ++l) {
    auto& layer = mutable_net.layers[static_cast<std::size_t>(l)];
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      check(g.weight_grads[static_cast<std::size_t>(l)].data()[i], layer.weights.data()[i],
            "W" + std::to_string(l) + "[" + std::to_string(i) + "]");
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      check(g.bias_grads[static_cast<std::size_t>(l)](i), layer.bias(i),
            "b" + std::to_string(l) + "[" + std::to_string(i) + "]");
    }
  }
  auto& mutable_batch = const_cast<miadip::Matrix&>(batch);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    check(g.input_gradient.data()[i], mutable_batch.data()[i], "x[" + std::to_string(i) + "]");
  }
  return report;
}

struct RandomProblem {
  miadip::Network net;
  miadip::Matrix batch;
  std::vector<int> labels;
  miadip::Regularizer reg;
};

// Network i of the gradient suite: random depth, widths, activations,
// nonzero biases, batch and (for some) a weight penalty.
inline RandomProblem MakeRandomProblem(int i) {
  miadip::Rng rng = miadip::MakeRng(0x6772616473ULL, {static_cast<std::uint64_t>(i)});
  std::uniform_int_distribution<int> width(2, 7), depth(0, 3), rows(1, 5);
  miadip::Architecture arch;
  arch.input_dim = width(rng);
  const int hidden = depth(rng);
  for (int h = 0; h < hidden; ++h) arch.hidden.push_back(width(rng));
  arch.output_dim = width(rng);
  RandomProblem p;
  p.net = miadip::MakeNetwork(arch, rng());
  for (auto& layer : p.net.layers) {
    for (Eigen::Index k = 0; k < layer.bias.size(); ++k) layer.bias(k) = miadip::Uniform(rng, -0.5, 0.5);
    if (&layer != &p.net.layers.back() && i % 3 == 1) layer.activation = miadip::Activation::kIdentity;
  }
  const int b = rows(rng);
  p.batch = miadip::GaussianMatrix(b, arch.input_dim, 1.0, rng);
  std::uniform_int_distribution<int> label(0, arch.output_dim - 1);
  for (int r = 0; r < b; ++r) p.labels.push_back(label(rng));
  if (i % 4 == 2) p.reg = miadip::Regularizer::L2(0.01);
  if (i % 4 == 3) p.reg = miadip::Regularizer::L1(0.01);
  return p;
}

inline constexpr int kGradientSuiteSize = 20;

// Two-class linear softmax classifier trained on isotropic blobs centred at
// +-(1, 1), so the learned normal is close to the diagonal and a sign-step
// path is close to the shortest path to the boundary.
struct LinearFixture {
  miadip::Network net;
  miadip::Vector w;  // logit difference is w.x + b
  double b = 0.0;
  miadip::SampleSet test;

  double AnalyticDistance(Eigen::Index i) const {
    return std::abs(w.dot(test.features.row(i).transpose()) + b) / w.norm();
  }
};

inline LinearFixture MakeLinearFixture(int n_test = 200) {
  miadip::Rng rng = miadip::MakeRng(0x6c696eULL);
  auto blobs = [&](int n) {
    miadip::SampleSet s;
    s.num_classes = 2;
    s.features = miadip::GaussianMatrix(n, 2, 0.5, rng);
    for (int i = 0; i < n; ++i) {
      const int y = i % 2;
      s.labels.push_back(y);
      s.features.row(i).array() += y == 0 ? 1.0 : -1.0;
    }
    s.membership.assign(static_cast<std::size_t>(n), 0);
    return s;
  };
  const miadip::SampleSet train = blobs(2000);
  LinearFixture f;
  f.net = miadip::MakeNetwork(miadip::Architecture{2, {}, 2}, 5);
  miadip::Rng order = miadip::MakeRng(6);
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int epoch = 0; epoch < 20; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), order);
    for (std::size_t s = 0; s < idx.size(); s += 50) {
      const std::span<const std::size_t> rows(idx.data() + s, 50);
      miadip::Matrix x(50, 2);
      std::vector<int> y;
      for (std::size_t k = 0; k < 50; ++k) {
        x.row(static_cast<Eigen::Index>(k)) = train.features.row(static_cast<Eigen::Index>(rows[k]));
        y.push_back(train.labels[rows[k]]);
      }
      miadip::ApplySgd(f.net, miadip::LossAndGrads(f.net, x, y), 0.5);
    }
  }
  const auto& layer = f.net.layers[0];
  f.w = (layer.weights.row(0) - layer.weights.row(1)).transpose();
  f.b = layer.bias(0) - layer.bias(1);
  f.test = blobs(n_test);
  return f;
}

inline constexpr int kCalibrationSuiteSize = 100;

// Random distance/membership instance with 2 to 1000 entries. Even instances
// sit on an integer grid to force ties; some carry infinite and zero
// distances.
inline void MakeCalibrationInstance(int inst, std::vector<double>& d,
                                    std::vector<std::uint8_t>& t) {
  miadip::Rng rng = miadip::MakeRng(77, {static_cast<std::uint64_t>(inst)});
  auto index = [&](std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
  };
  const std::size_t n = 2 + index(999);
  d.assign(n, 0.0);
  t.assign(n, 0);
  const bool coarse = inst % 2 == 0;
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = i < 2 ? static_cast<std::uint8_t>(i) : static_cast<std::uint8_t>(index(2));
    const double base = t[i] ? 1.0 : 0.6;
    d[i] = coarse ? std::floor(miadip::Uniform(rng, 0.0, 6.0) * base)
                  : miadip::Uniform(rng, 0.0, 3.0) * base;
    if (inst % 5 == 0 && index(20) == 0) d[i] = std::numeric_limits<double>::infinity();
    if (inst % 7 == 0 && index(20) == 0) d[i] = 0.0;
  }
}

}  // namespace checks

#endif  // MIADIP_TESTS_CHECKS_HPP_
