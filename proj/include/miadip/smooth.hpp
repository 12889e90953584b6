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

// Randomized-smoothing wrapper: the base network is evaluated on s Gaussian
// perturbations of the input and the resulting predictions are averaged into
// a single label.

#ifndef MIADIP_SMOOTH_HPP_
#define MIADIP_SMOOTH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miadip/core.hpp"
#include "miadip/network.hpp"

namespace miadip {

enum class Aggregation { kSoftAverage, kMajorityVote };
enum class NoiseMode { kPerSample, kFresh };

struct SmoothingConfig {
  double sigma = 0.0;  // absolute noise std in feature units
  int num_samples = 32;
  std::uint64_t master_seed = 0;
  Aggregation aggregation = Aggregation::kSoftAverage;
  // kPerSample: noise depends only on (master_seed, sample_key), so repeated
  // queries for one sample see a fixed decision function. kFresh: the query
  // index is folded into the stream as well.
  NoiseMode noise_mode = NoiseMode::kPerSample;

  void Validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
    if (num_samples < 1) throw ConfigError("num_samples must be >= 1");
  }
};

class SmoothedClassifier {
 public:
  SmoothedClassifier(Network base, SmoothingConfig cfg)
      : base_(std::move(base)), cfg_(cfg) {
    cfg_.Validate();
    base_.Validate();
  }

  const Network& base() const { return base_; }
  const SmoothingConfig& config() const { return cfg_; }
  int input_dim() const { return base_.input_dim(); }
  int num_classes() const { return base_.output_dim(); }

  // s x d matrix of noise vectors for one sample (and query, in fresh mode).
  Matrix NoiseDraws(std::uint64_t sample_key, std::uint64_t query_index = 0) const {
    const std::uint64_t q = cfg_.noise_mode == NoiseMode::kFresh ? query_index + 1 : 0;
    Rng rng = MakeRng(cfg_.master_seed, {TagOf("smooth"), sample_key, q});
    return GaussianMatrix(cfg_.num_samples, base_.input_dim(), cfg_.sigma, rng);
  }

  Vector PredictProba(std::span<const double> x, std::uint64_t sample_key,
                      std::uint64_t query_index = 0) const {
    CheckInput(x);
    if (cfg_.sigma == 0.0) return Softmax(Forward(base_, x));
    const Matrix logits = Forward(base_, Perturbed(x, sample_key, query_index));
    Vector avg = Vector::Zero(logits.cols());
    if (cfg_.aggregation == Aggregation::kMajorityVote) {
      for (Eigen::Index r = 0; r < logits.rows(); ++r) avg(Argmax(logits.row(r))) += 1.0;
    } else {
      const Matrix probs = Softmax(logits);
      for (Eigen::Index r = 0; r < probs.rows(); ++r) avg += probs.row(r).transpose();
    }
    avg /= static_cast<double>(logits.rows());
    return avg;
  }

  int Predict(std::span<const double> x, std::uint64_t sample_key,
              std::uint64_t query_index = 0) const {
    if (cfg_.sigma == 0.0) {
      CheckInput(x);
      return PredictLabel(base_, x);
    }
    return Argmax(PredictProba(x, sample_key, query_index));
  }

  // Gradient of -log(mean_i softmax(base(x + n_i))_label) with respect to x,
  // taken over the sample's fixed noise draws.
  Vector LossGradient(std::span<const double> x, int label, std::uint64_t sample_key) const {
    CheckInput(x);
    if (cfg_.sigma == 0.0) return InputLossGradient(base_, x, label);
    const Matrix batch = Perturbed(x, sample_key, 0);
    const Matrix probs = Softmax(Forward(base_, batch));
    const double s = static_cast<double>(probs.rows());
    const double mean_py = probs.col(label).mean();
    Matrix dlogits = -probs;
    dlogits.col(label).array() += 1.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      dlogits.row(r) *= -probs(r, label) / (s * std::max(mean_py, 1e-300));
    }
    return InputVjp(base_, batch, dlogits).colwise().sum().transpose();
  }

 private:
  void CheckInput(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != base_.input_dim()) {
      throw ShapeError("smoothed input has dim " + std::to_string(x.size()) + ", expected " +
                       std::to_string(base_.input_dim()));
    }
    for (double v : x) {
      if (!std::isfinite(v)) throw NumericError("non-finite input to smoothed classifier");
    }
  }

  Matrix Perturbed(std::span<const double> x, std::uint64_t sample_key,
                   std::uint64_t query_index) const {
    Matrix batch = NoiseDraws(sample_key, query_index);
    batch.rowwise() += AsVector(x).transpose();
    return batch;
  }

  Network base_;
  SmoothingConfig cfg_;
};

struct SigmaMeasurement {
  double sigma = 0.0;
  double asr = 0.0;
  double accuracy = 0.0;
};

struct SigmaSelection {
  double sigma = 0.0;
  bool flagged = false;  // no candidate met the accuracy floor
  double accuracy_floor = 0.0;
  std::vector<SigmaMeasurement> table;  // ascending sigma
};

inline constexpr double kDefaultAccuracyTolerance = 0.02;

// Picks the candidate with the lowest measured ASR among those whose
// nonmember accuracy stays within `tolerance` of the unsmoothed accuracy.
// Ties go to the smaller sigma. measure(sigma) returns a SigmaMeasurement.
template <class MeasureFn>
SigmaSelection TuneSigma(std::span<const double> candidates, MeasureFn&& measure,
                         double tolerance = kDefaultAccuracyTolerance) {
  if (candidates.empty()) throw ConfigError("tune_sigma needs at least one candidate");
  std::vector<double> sorted(candidates.begin(), candidates.end());
  for (double s : sorted) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("sigma candidates must be >= 0");
  }
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  SigmaSelection out;
  for (double s : sorted) out.table.push_back(measure(s));
  double base_accuracy = 0.0;
  if (sorted.front() == 0.0) {
    base_accuracy = out.table.front().accuracy;
  } else {
    base_accuracy = measure(0.0).accuracy;
  }
  out.accuracy_floor = base_accuracy - tolerance;
  const SigmaMeasurement* best = nullptr;
  for (const SigmaMeasurement& m : out.table) {
    // Small slack so an exact tolerance-width drop is not lost to rounding.
    if (m.accuracy + 1e-12 < out.accuracy_floor) continue;
    if (best == nullptr || m.asr < best->asr) best = &m;
  }
  if (best == nullptr) {
    out.sigma = 0.0;
    out.flagged = true;
  } else {
    out.sigma = best->sigma;
  }
  return out;
}

}  // namespace miadip

#endif  // MIADIP_SMOOTH_HPP_
