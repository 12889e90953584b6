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

// Membership-inference attacks.
//
// Label-only attacks estimate, per sample, the smallest L2 perturbation that
// changes the predicted label and call the sample a member when that distance
// is at least a threshold tau. The white-box estimator iterates signed
// gradient steps; the black-box estimator is a simplified HopSkipJump that
// sees nothing but labels. The confidence-score attack thresholds the
// cross-entropy of the true class instead.

#ifndef MIADIP_ATTACK_HPP_
#define MIADIP_ATTACK_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "miadip/core.hpp"
#include "miadip/data.hpp"
#include "miadip/metrics.hpp"
#include "miadip/network.hpp"
#include "miadip/parallel.hpp"
#include "miadip/smooth.hpp"
#include "miadip/train.hpp"

namespace miadip {

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

// Label-only query access. The counter increments exactly once per query.
class LabelOracle {
 public:
  using QueryFn = std::function<int(std::span<const double>, std::uint64_t query_index)>;

  explicit LabelOracle(QueryFn fn) : fn_(std::move(fn)) {}

  int Query(std::span<const double> x) {
    const int label = fn_(x, static_cast<std::uint64_t>(queries_));
    ++queries_;
    return label;
  }
  int Query(const Vector& x) { return Query(std::span<const double>(x.data(), x.size())); }

  std::int64_t queries() const { return queries_; }

 private:
  QueryFn fn_;
  std::int64_t queries_ = 0;
};

struct DistanceEstimate {
  double delta_hat = kInfiniteDistance;
  std::int64_t queries_used = 0;
  bool converged = false;
  Vector adversarial;  // point that realized delta_hat; empty when infinite

  bool finite() const { return std::isfinite(delta_hat); }
};

struct BimBudget {
  double alpha = 0.01;
  int max_iters = 1000;
  double clip_lo = -std::numeric_limits<double>::infinity();
  double clip_hi = std::numeric_limits<double>::infinity();
};

struct HsjBudget {
  int init_trials = 100;
  double bsearch_tol = 1e-3;  // relative to the current boundary distance
  int grad_probes = 100;
  int max_rounds = 20;
  std::int64_t max_queries = 10000;
  double box_lo = -5.0;  // uniform box for the random adversarial start
  double box_hi = 5.0;
};

struct AttackBudget {
  BimBudget bim;
  HsjBudget hsj;

  void Validate() const {
    if (!(bim.alpha > 0.0) || bim.max_iters <= 0 || !(bim.clip_lo < bim.clip_hi)) {
      throw ConfigError("bim budget needs alpha > 0, max_iters > 0, clip_lo < clip_hi");
    }
    if (hsj.init_trials <= 0 || hsj.grad_probes <= 0 || hsj.max_rounds <= 0 ||
        hsj.max_queries <= 0) {
      throw ConfigError("hsj budget counts must be positive");
    }
    if (!(hsj.bsearch_tol > 0.0 && hsj.bsearch_tol < 1.0)) {
      throw ConfigError("hsj bsearch_tol must lie in (0, 1)");
    }
    if (!(hsj.box_lo < hsj.box_hi)) throw ConfigError("hsj box_lo must be < box_hi");
  }
};

// Gradient access for the white-box attacker.
template <class M>
concept WhiteBoxModel = requires(const M& m, std::span<const double> x, int y) {
  { m.Label(x) } -> std::convertible_to<int>;
  { m.LossGradient(x, y) } -> std::convertible_to<Vector>;
};

struct NetworkWhiteBox {
  const Network& net;
  int Label(std::span<const double> x) const { return PredictLabel(net, x); }
  Vector LossGradient(std::span<const double> x, int y) const {
    return InputLossGradient(net, x, y);
  }
};

// Expectation-over-noise gradients through the smoothed classifier's fixed
// per-sample draws.
struct SmoothedWhiteBox {
  const SmoothedClassifier& sc;
  std::uint64_t sample_key;
  int Label(std::span<const double> x) const { return sc.Predict(x, sample_key); }
  Vector LossGradient(std::span<const double> x, int y) const {
    return sc.LossGradient(x, y, sample_key);
  }
};

// Iterated signed-gradient ascent on the loss until the label flips.
// delta_hat is the L2 distance of the first misclassified iterate.
template <WhiteBoxModel Model>
DistanceEstimate BimDistance(const Model& model, std::span<const double> x, int y_true,
                             const BimBudget& budget) {
  DistanceEstimate est;
  const Vector x0 = AsVector(x);
  est.queries_used = 1;
  if (model.Label(x) != y_true) {
    est.delta_hat = 0.0;
    est.converged = true;
    est.adversarial = x0;
    return est;
  }
  Vector xt = x0;
  for (int t = 0; t < budget.max_iters; ++t) {
    const Vector g = model.LossGradient(std::span<const double>(xt.data(), xt.size()), y_true);
    if ((g.array() == 0.0).all()) return est;  // degenerate: nowhere to go
    xt += budget.alpha * g.unaryExpr([](double v) {
      return static_cast<double>((v > 0.0) - (v < 0.0));
    });
    xt = xt.cwiseMax(budget.clip_lo).cwiseMin(budget.clip_hi);
    ++est.queries_used;
    if (model.Label(std::span<const double>(xt.data(), xt.size())) != y_true) {
      est.delta_hat = (xt - x0).norm();
      est.converged = true;
      est.adversarial = xt;
      return est;
    }
  }
  return est;
}

namespace internal {

struct QueryBudgetExhausted {};

}  // namespace internal

// Simplified HopSkipJump. Stages: random adversarial start from the uniform
// box, boundary binary search, then rounds of Monte Carlo boundary-normal
// estimation, a geometric step along it and re-projection. delta_hat is the
// smallest boundary distance seen.
inline DistanceEstimate HsjDistance(LabelOracle& oracle, std::span<const double> x, int y_true,
                                    const HsjBudget& budget, std::uint64_t seed) {
  DistanceEstimate est;
  const std::int64_t start_queries = oracle.queries();
  const Vector x0 = AsVector(x);
  const auto d = x0.size();
  auto used = [&] { return oracle.queries() - start_queries; };
  auto is_adversarial = [&](const Vector& z) {
    if (used() >= budget.max_queries) throw internal::QueryBudgetExhausted{};
    return oracle.Query(z) != y_true;
  };
  // Adversarial end of the segment [x0, adv] within relative tolerance.
  auto boundary_search = [&](const Vector& adv) {
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > budget.bsearch_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (is_adversarial((1.0 - mid) * x0 + mid * adv)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return Vector((1.0 - hi) * x0 + hi * adv);
  };

  Rng rng = MakeRng(seed, {TagOf("hsj")});
  try {
    if (is_adversarial(x0)) {
      est.delta_hat = 0.0;
      est.converged = true;
      est.adversarial = x0;
      est.queries_used = used();
      return est;
    }
    Vector start;
    for (int i = 0; i < budget.init_trials; ++i) {
      Vector u(d);
      for (Eigen::Index k = 0; k < d; ++k) u(k) = Uniform(rng, budget.box_lo, budget.box_hi);
      if (is_adversarial(u)) {
        start = std::move(u);
        break;
      }
    }
    if (start.size() == 0) {
      est.queries_used = used();
      return est;
    }
    est.converged = true;
    Vector boundary = boundary_search(start);
    est.delta_hat = (boundary - x0).norm();
    est.adversarial = boundary;

    const double probe_scale = std::sqrt(budget.bsearch_tol);
    for (int round = 1; round <= budget.max_rounds; ++round) {
      const double dist = (boundary - x0).norm();
      const double eta = probe_scale * dist;
      std::vector<Vector> probes;
      std::vector<double> signs;
      probes.reserve(static_cast<std::size_t>(budget.grad_probes));
      for (int i = 0; i < budget.grad_probes; ++i) {
        Vector u(d);
        for (Eigen::Index k = 0; k < d; ++k) u(k) = StandardNormal(rng);
        u.normalize();
        signs.push_back(is_adversarial(boundary + eta * u) ? 1.0 : -1.0);
        probes.push_back(std::move(u));
      }
      double mean_sign = 0.0;
      for (double s : signs) mean_sign += s;
      mean_sign /= static_cast<double>(signs.size());
      // Baseline subtraction unless every probe agreed.
      const double baseline = std::abs(mean_sign) == 1.0 ? 0.0 : mean_sign;
      Vector direction = Vector::Zero(d);
      for (std::size_t i = 0; i < probes.size(); ++i) {
        direction += (signs[i] - baseline) * probes[i];
      }
      if (direction.norm() == 0.0) continue;
      direction.normalize();

      double step = dist / std::sqrt(static_cast<double>(round));
      bool stepped = false;
      for (int halvings = 0; halvings < 30; ++halvings) {
        if (is_adversarial(boundary + step * direction)) {
          stepped = true;
          break;
        }
        step *= 0.5;
      }
      if (!stepped) continue;
      boundary = boundary_search(boundary + step * direction);
      const double new_dist = (boundary - x0).norm();
      if (new_dist < est.delta_hat) {
        est.delta_hat = new_dist;
        est.adversarial = boundary;
      }
    }
  } catch (const internal::QueryBudgetExhausted&) {
    // Keep the best estimate found within the cap.
  }
  est.queries_used = used();
  return est;
}

inline LabelOracle NetworkOracle(const Network& net) {
  return LabelOracle([&net](std::span<const double> x, std::uint64_t) {
    return PredictLabel(net, x);
  });
}

inline LabelOracle SmoothedOracle(const SmoothedClassifier& sc, std::uint64_t sample_key) {
  return LabelOracle([&sc, sample_key](std::span<const double> x, std::uint64_t q) {
    return sc.Predict(x, sample_key, q);
  });
}

// The model under attack: either a bare network or its smoothed wrapper.
class AttackTarget {
 public:
  explicit AttackTarget(const Network& net) : net_(&net) {}
  explicit AttackTarget(const SmoothedClassifier& sc) : net_(&sc.base()), smoothed_(&sc) {}

  bool smoothed() const { return smoothed_ != nullptr && smoothed_->config().sigma > 0.0; }
  int num_classes() const { return net_->output_dim(); }

  LabelOracle Oracle(std::uint64_t sample_key) const {
    return smoothed_ ? SmoothedOracle(*smoothed_, sample_key) : NetworkOracle(*net_);
  }

  int Label(std::span<const double> x, std::uint64_t sample_key) const {
    return smoothed_ ? smoothed_->Predict(x, sample_key) : PredictLabel(*net_, x);
  }

  Vector Proba(std::span<const double> x, std::uint64_t sample_key) const {
    return smoothed_ ? smoothed_->PredictProba(x, sample_key) : Softmax(Forward(*net_, x));
  }

  template <class Fn>
  auto WithWhiteBox(std::uint64_t sample_key, Fn&& fn) const {
    if (smoothed_) return fn(SmoothedWhiteBox{*smoothed_, sample_key});
    return fn(NetworkWhiteBox{*net_});
  }

 private:
  const Network* net_;
  const SmoothedClassifier* smoothed_ = nullptr;
};

enum class AttackMode { kBim, kHsj };

inline const char* AttackModeName(AttackMode m) { return m == AttackMode::kBim ? "bim" : "hsj"; }

// Distances for every sample; sample i uses key key_offset + i for its
// smoothing substream and attack randomness, so any job count gives the same
// result.
inline std::vector<DistanceEstimate> EstimateDistances(const AttackTarget& target,
                                                       const SampleSet& samples,
                                                       std::uint64_t key_offset,
                                                       const AttackBudget& budget,
                                                       AttackMode mode, std::uint64_t seed,
                                                       int jobs = 1) {
  budget.Validate();
  std::vector<DistanceEstimate> out(samples.size());
  ParallelFor(samples.size(), jobs, [&](std::size_t i) {
    const std::uint64_t key = key_offset + i;
    const std::span<const double> x = RowSpan(samples.features, static_cast<Eigen::Index>(i));
    const int y = samples.labels[i];
    if (mode == AttackMode::kBim) {
      out[i] = target.WithWhiteBox(key, [&](const auto& model) {
        return BimDistance(model, x, y, budget.bim);
      });
    } else {
      LabelOracle oracle = target.Oracle(key);
      out[i] = HsjDistance(oracle, x, y, budget.hsj, DeriveSeed(seed, {key}));
    }
  });
  return out;
}

struct Threshold {
  double tau = 0.0;
  ConfusionCounts counts;
  double asr() const { return counts.asr(); }
};

// Member rule for label-only attacks. tau = +inf predicts nobody a member,
// tau = -inf everybody.
inline bool PredictMemberByDistance(double delta_hat, double tau) {
  return tau != kInfiniteDistance && delta_hat >= tau;
}

namespace internal {

// Threshold strictly between a and b (a < b); +inf sorts above every finite
// value, so the gap below it is represented by the largest finite double.
inline double Midpoint(double a, double b) {
  if (b == kInfiniteDistance) return std::numeric_limits<double>::max();
  const double mid = a + 0.5 * (b - a);
  return mid > a ? mid : b;
}

}  // namespace internal

// ASR-maximizing threshold over -inf, the midpoints of adjacent distinct
// distances, and +inf. Ties keep the smallest tau.
inline Threshold CalibrateThreshold(std::span<const double> distances,
                                    std::span<const std::uint8_t> memberships) {
  if (distances.size() != memberships.size()) {
    throw MetricError("calibration needs one membership flag per distance");
  }
  std::vector<std::pair<double, std::uint8_t>> items;
  items.reserve(distances.size());
  std::int64_t positives = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (std::isnan(distances[i])) throw MetricError("NaN distance in calibration input");
    items.emplace_back(distances[i], memberships[i] ? 1 : 0);
    positives += memberships[i] ? 1 : 0;
  }
  const auto negatives = static_cast<std::int64_t>(items.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("calibration needs both members and nonmembers");
  }
  std::sort(items.begin(), items.end());

  // tau = -inf: everyone is predicted member.
  ConfusionCounts current{positives, 0, 0, negatives};
  Threshold best{-kInfiniteDistance, current};
  std::size_t i = 0;
  while (i < items.size()) {
    const double value = items[i].first;
    // Move every sample equal to `value` below the threshold.
    while (i < items.size() && items[i].first == value) {
      if (items[i].second) {
        --current.tp;
        ++current.fn;
      } else {
        --current.fp;
        ++current.tn;
      }
      ++i;
    }
    const double tau =
        i < items.size() ? internal::Midpoint(value, items[i].first) : kInfiniteDistance;
    if (current.AsrNumerator() > best.counts.AsrNumerator()) best = {tau, current};
  }
  if (best.tau != kInfiniteDistance) {
    // The +inf candidate predicts nobody a member, even samples at +inf.
    ConfusionCounts none{0, positives, negatives, 0};
    if (none.AsrNumerator() > best.counts.AsrNumerator()) best = {kInfiniteDistance, none};
  }
  return best;
}

struct AttackRecord {
  std::size_t sample_id = 0;
  bool true_member = false;
  DistanceEstimate estimate;
  bool predicted_member = false;
};

struct MiaResult {
  std::vector<AttackRecord> records;
  ConfusionMetrics metrics;
  std::int64_t queries_total = 0;
};

inline SampleSet Concatenate(const SampleSet& a, const SampleSet& b) {
  if (a.dim() != b.dim() && !a.empty() && !b.empty()) {
    throw ShapeError("cannot concatenate sample sets of different dims");
  }
  SampleSet out;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.features.resize(static_cast<Eigen::Index>(a.size() + b.size()),
                      a.empty() ? b.features.cols() : a.features.cols());
  if (!a.empty()) out.features.topRows(a.features.rows()) = a.features;
  if (!b.empty()) out.features.bottomRows(b.features.rows()) = b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.membership = a.membership;
  out.membership.insert(out.membership.end(), b.membership.begin(), b.membership.end());
  return out;
}

inline MiaResult ThresholdDistances(std::vector<DistanceEstimate> estimates,
                                    std::span<const std::uint8_t> truths, double tau) {
  MiaResult result;
  std::vector<std::uint8_t> predictions;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    AttackRecord rec;
    rec.sample_id = i;
    rec.true_member = truths[i] != 0;
    rec.predicted_member = PredictMemberByDistance(estimates[i].delta_hat, tau);
    result.queries_total += estimates[i].queries_used;
    rec.estimate = std::move(estimates[i]);
    predictions.push_back(rec.predicted_member ? 1 : 0);
    result.records.push_back(std::move(rec));
  }
  result.metrics = ComputeConfusionMetrics(predictions, truths);
  return result;
}

// Label-only MIA with a fixed threshold. Members get sample ids [0, m) and
// nonmembers [m, m + n).
inline MiaResult RunLabelOnlyMia(const AttackTarget& target, const SampleSet& members,
                                 const SampleSet& nonmembers, double tau,
                                 const AttackBudget& budget, AttackMode mode,
                                 std::uint64_t seed, int jobs = 1) {
  const SampleSet all = Concatenate(members.WithMembership(1), nonmembers.WithMembership(0));
  return ThresholdDistances(EstimateDistances(target, all, 0, budget, mode, seed, jobs),
                            all.membership, tau);
}

inline std::string AttackRecordsToCsv(const std::vector<AttackRecord>& records) {
  std::string out = "sample_id,true_member,delta_hat,queries,converged,predicted_member\n";
  for (const AttackRecord& r : records) {
    out += std::to_string(r.sample_id) + "," + (r.true_member ? "1" : "0") + "," +
           FormatDouble(r.estimate.delta_hat) + "," + std::to_string(r.estimate.queries_used) +
           "," + (r.estimate.converged ? "1" : "0") + "," + (r.predicted_member ? "1" : "0") +
           "\n";
  }
  return out;
}

inline constexpr double kMinTrueClassProbability = 1e-12;

// Cross-entropy of the true class, -log p_y, with p_y clipped below.
inline double EntropyScore(const Vector& proba, int label) {
  return -std::log(std::max(proba(label), kMinTrueClassProbability));
}

inline std::vector<double> EntropyScores(const AttackTarget& target, const SampleSet& samples,
                                         std::uint64_t key_offset) {
  std::vector<double> scores(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    scores[i] = EntropyScore(
        target.Proba(RowSpan(samples.features, static_cast<Eigen::Index>(i)), key_offset + i),
        samples.labels[i]);
  }
  return scores;
}

inline bool PredictMemberByEntropy(double score, double tau) { return score <= tau; }

// Same maximizer as CalibrateThreshold with the inequality reversed
// (member iff score <= tau).
inline Threshold CalibrateEntropyThreshold(std::span<const double> scores,
                                           std::span<const std::uint8_t> memberships) {
  std::vector<double> negated(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) negated[i] = -scores[i];
  Threshold t = CalibrateThreshold(negated, memberships);
  t.tau = -t.tau;
  return t;
}

inline ConfusionMetrics EntropyMia(std::span<const double> scores,
                                   std::span<const std::uint8_t> truths, double tau,
                                   std::vector<std::uint8_t>* predictions = nullptr) {
  std::vector<std::uint8_t> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    pred[i] = PredictMemberByEntropy(scores[i], tau) ? 1 : 0;
  }
  ConfusionMetrics m = ComputeConfusionMetrics(pred, truths);
  if (predictions) *predictions = std::move(pred);
  return m;
}

struct ShadowModel {
  TrainedModel model;
  SampleSet members;
  SampleSet nonmembers;
};

inline bool SharesAnyRow(const SampleSet& a, const SampleSet& b) {
  for (Eigen::Index i = 0; i < a.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.features.rows(); ++j) {
      if (a.features.row(i) == b.features.row(j)) return true;
    }
  }
  return false;
}

// Re-runs the target's training procedure on adversary data. The pool is
// split class-stratified into n_members shadow members and an equal number of
// shadow nonmembers.
inline ShadowModel TrainShadow(const TrainingProcedure& procedure,
                               const SampleSet& adversary_pool, std::size_t n_members,
                               const SampleSet& target_members, std::uint64_t seed) {
  if (adversary_pool.size() < 2 * n_members) {
    throw ConfigError("shadow: adversary pool of " + std::to_string(adversary_pool.size()) +
                      " cannot supply " + std::to_string(n_members) +
                      " members plus as many nonmembers");
  }
  if (SharesAnyRow(adversary_pool, target_members)) {
    throw ConfigError("shadow: adversary data overlaps the target member set");
  }
  MembershipSplit split =
      SplitMembership(adversary_pool, n_members, DeriveSeed(seed, {TagOf("shadow-split")}));
  ShadowModel shadow;
  shadow.members = std::move(split.members);
  shadow.nonmembers = split.nonmembers.Head(n_members);
  TrainingProcedure proc = procedure;
  proc.loop.seed = DeriveSeed(seed, {TagOf("shadow-train")});
  shadow.model = TrainTarget(proc, shadow.members, shadow.nonmembers);
  return shadow;
}

}  // namespace miadip

#endif  // MIADIP_ATTACK_HPP_
