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

// Source pretraining, frozen-layer transfer and the comparison baselines
// (no transfer, L1/L2 penalties, clipped-noisy SGD, leave-one-partition-out
// self-distillation).

#ifndef MIADIP_TRAIN_HPP_
#define MIADIP_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "miadip/core.hpp"
#include "miadip/data.hpp"
#include "miadip/network.hpp"

namespace miadip {

inline double Accuracy(const Network& net, const SampleSet& set) {
  if (set.empty()) return 0.0;
  const std::vector<int> predicted = PredictLabels(net, set.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) correct += predicted[i] == set.labels[i];
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

struct TransferConfig {
  int frozen_layers = 0;  // M, counted in dense layers from the input side
  int epochs = 150;
  double lr = 0.05;
  int batch_size = 16;
  bool head_replace = true;
  std::uint64_t seed = 0;

  void Validate() const {
    if (frozen_layers < 0) throw ConfigError("frozen_layers must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  }
};

enum class Variant { kNtl, kTl, kL1, kL2, kDp, kSelena };

inline const char* VariantName(Variant v) {
  switch (v) {
    case Variant::kNtl: return "ntl";
    case Variant::kTl: return "tl";
    case Variant::kL1: return "l1";
    case Variant::kL2: return "l2";
    case Variant::kDp: return "dp";
    case Variant::kSelena: return "selena";
  }
  return "?";
}

inline Variant ParseVariant(const std::string& name) {
  for (Variant v : {Variant::kNtl, Variant::kTl, Variant::kL1, Variant::kL2, Variant::kDp,
                    Variant::kSelena}) {
    if (name == VariantName(v)) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (expected ntl|tl|l1|l2|dp|selena)");
}

struct Provenance {
  Variant variant = Variant::kNtl;
  int frozen_layers = 0;
  double lambda = 0.0;
  double clip = 0.0;
  double noise_multiplier = 0.0;
  int parts = 0;

  std::string ToString() const {
    switch (variant) {
      case Variant::kNtl: return "ntl";
      case Variant::kTl: return "tl(" + std::to_string(frozen_layers) + ")";
      case Variant::kL1: return "l1(" + FormatDouble(lambda) + ")";
      case Variant::kL2: return "l2(" + FormatDouble(lambda) + ")";
      case Variant::kDp:
        return "dp(" + FormatDouble(clip) + "," + FormatDouble(noise_multiplier) + ")";
      case Variant::kSelena: return "selena_lite(" + std::to_string(parts) + ")";
    }
    return "?";
  }
};

struct TrainedModel {
  Network network;
  Provenance provenance;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;

  double gap() const { return train_accuracy - eval_accuracy; }
};

namespace internal {

// Minibatch SGD over shuffled epochs. grad_fn(net, rows) returns the
// gradient for the given row indices of the training set.
template <class GradFn>
void RunSgd(Network& net, std::size_t n, int epochs, int batch_size, double lr,
            std::uint64_t seed, GradFn&& grad_fn) {
  Rng order_rng = MakeRng(seed, {TagOf("order")});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(batch_size);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(bs, n - start));
      ApplySgd(net, grad_fn(static_cast<const Network&>(net), rows), lr);
    }
  }
}

inline Matrix GatherRows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

inline std::vector<int> GatherLabels(const std::vector<int>& labels,
                                     std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

inline void TrainCrossEntropy(Network& net, const SampleSet& data, int epochs, int batch_size,
                              double lr, std::uint64_t seed, const Regularizer& reg) {
  RunSgd(net, data.size(), epochs, batch_size, lr, seed,
         [&](const Network& current, std::span<const std::size_t> rows) {
           return LossAndGrads(current, GatherRows(data.features, rows),
                               GatherLabels(data.labels, rows), reg);
         });
}

inline void CheckTrainable(const SampleSet& data, const Network& net) {
  data.Validate();
  if (data.empty()) throw ConfigError("training set is empty");
  if (data.dim() != net.input_dim()) {
    throw ShapeError("training features have dim " + std::to_string(data.dim()) +
                     " but the network expects " + std::to_string(net.input_dim()));
  }
  if (data.num_classes > net.output_dim()) {
    throw ShapeError("network head is narrower than the class count");
  }
}

inline void CheckFrozen(const Network& before, const Network& after) {
  for (int l = 0; l < before.num_layers(); ++l) {
    if (!before.layers[l].trainable && !BitwiseEqual(before.layers[l], after.layers[l])) {
      throw Error("frozen layer " + std::to_string(l) + " changed during training");
    }
  }
}

inline TrainedModel Finish(Network net, Provenance provenance, const SampleSet& train,
                           const SampleSet& eval) {
  TrainedModel model;
  model.train_accuracy = Accuracy(net, train);
  model.eval_accuracy = Accuracy(net, eval);
  model.network = std::move(net);
  model.provenance = provenance;
  return model;
}

}  // namespace internal

struct PretrainedModel {
  Network network;
  double train_accuracy = 0.0;
  std::optional<std::string> warning;
};

inline constexpr double kSourceAccuracyTarget = 0.95;

struct SourceTrainConfig {
  int epochs = 8;
  double lr = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

inline PretrainedModel TrainSource(const Architecture& arch, const SampleSet& source,
                                   const SourceTrainConfig& cfg) {
  if (cfg.epochs < 0 || !(cfg.lr > 0.0) || cfg.batch_size <= 0) {
    throw ConfigError("invalid source training config");
  }
  Architecture a = arch;
  a.output_dim = source.num_classes;
  PretrainedModel out;
  out.network = MakeNetwork(a, cfg.seed);
  internal::CheckTrainable(source, out.network);
  try {
    internal::TrainCrossEntropy(out.network, source, cfg.epochs, cfg.batch_size, cfg.lr,
                                cfg.seed, Regularizer::None());
  } catch (const NumericError& e) {
    throw StageError("train-source", std::string("training diverged: ") + e.what());
  }
  out.train_accuracy = Accuracy(out.network, source);
  if (out.train_accuracy < kSourceAccuracyTarget) {
    out.warning = "source train accuracy " + FormatDouble(out.train_accuracy) +
                  " below target " + FormatDouble(kSourceAccuracyTarget);
  }
  return out;
}

// Initializes from the pretrained weights, freezes the first M dense layers,
// swaps in a fresh head when needed and SGD-trains the rest on the target set.
inline TrainedModel TransferStage1(const Network& pretrained, const TransferConfig& cfg,
                                   const SampleSet& target_train, const SampleSet& eval_set) {
  cfg.Validate();
  pretrained.Validate();
  const int k = pretrained.num_layers();
  if (cfg.frozen_layers >= k) {
    throw ConfigError("frozen_layers " + std::to_string(cfg.frozen_layers) +
                      " must be < layer count " + std::to_string(k));
  }
  if (pretrained.input_dim() != target_train.dim()) {
    throw ShapeError("pretrained input dim " + std::to_string(pretrained.input_dim()) +
                     " != target feature dim " + std::to_string(target_train.dim()));
  }
  Network net = pretrained;
  if (cfg.head_replace || pretrained.output_dim() != target_train.num_classes) {
    Rng head_rng = MakeRng(cfg.seed, {TagOf("head")});
    net.layers.back() = MakeDenseLayer(net.layers.back().in_dim(), target_train.num_classes,
                                       Activation::kIdentity, head_rng);
  }
  for (int l = 0; l < k; ++l) net.layers[l].trainable = l >= cfg.frozen_layers;
  internal::CheckTrainable(target_train, net);
  const Network before = net;
  internal::TrainCrossEntropy(net, target_train, cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed,
                              Regularizer::None());
  internal::CheckFrozen(before, net);
  Provenance p;
  p.variant = Variant::kTl;
  p.frozen_layers = cfg.frozen_layers;
  return internal::Finish(std::move(net), p, target_train, eval_set);
}

inline Network TargetInit(Architecture arch, const SampleSet& target_train, std::uint64_t seed) {
  arch.input_dim = target_train.dim();
  arch.output_dim = target_train.num_classes;
  return MakeNetwork(arch, seed);
}

inline TrainedModel TrainRegularized(const Architecture& arch, const SampleSet& target_train,
                                     const SampleSet& eval_set, const Regularizer& reg,
                                     const TransferConfig& cfg) {
  cfg.Validate();
  if (reg.lambda < 0.0) throw ConfigError("regularization strength must be >= 0");
  Network net = TargetInit(arch, target_train, cfg.seed);
  internal::CheckTrainable(target_train, net);
  internal::TrainCrossEntropy(net, target_train, cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed,
                              reg);
  Provenance p;
  p.variant = reg.kind == Regularizer::Kind::kL1   ? Variant::kL1
              : reg.kind == Regularizer::Kind::kL2 ? Variant::kL2
                                                   : Variant::kNtl;
  p.lambda = reg.lambda;
  return internal::Finish(std::move(net), p, target_train, eval_set);
}

// Random initialization, nothing frozen.
inline TrainedModel TrainNtl(const Architecture& arch, const SampleSet& target_train,
                             const SampleSet& eval_set, const TransferConfig& cfg) {
  return TrainRegularized(arch, target_train, eval_set, Regularizer::None(), cfg);
}

inline TrainedModel TrainDpLite(const Architecture& arch, const SampleSet& target_train,
                                const SampleSet& eval_set, double clip,
                                double noise_multiplier, const TransferConfig& cfg) {
  cfg.Validate();
  Network net = TargetInit(arch, target_train, cfg.seed);
  internal::CheckTrainable(target_train, net);
  Rng noise_rng = MakeRng(cfg.seed, {TagOf("dp-noise")});
  internal::RunSgd(net, target_train.size(), cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed,
                   [&](const Network& current, std::span<const std::size_t> rows) {
                     ClipStats stats;
                     GradientBundle g = PerSampleClippedNoisyGrads(
                         current, internal::GatherRows(target_train.features, rows),
                         internal::GatherLabels(target_train.labels, rows), clip,
                         noise_multiplier, noise_rng, &stats);
                     if (stats.max_clipped_norm > clip * (1.0 + 1e-12)) {
                       throw NumericError("per-sample clip bound violated");
                     }
                     return g;
                   });
  Provenance p;
  p.variant = Variant::kDp;
  p.clip = clip;
  p.noise_multiplier = noise_multiplier;
  return internal::Finish(std::move(net), p, target_train, eval_set);
}

struct SelenaLabels {
  std::vector<int> partition_of;  // partition index per training row
  std::vector<Network> submodels;  // submodel k never saw partition k
  Matrix soft_targets;             // N x C, row i from submodel partition_of[i]
};

inline SelenaLabels SelenaSoftLabels(const Architecture& arch, const SampleSet& target_train,
                                     int parts, const TransferConfig& cfg) {
  cfg.Validate();
  if (parts < 2) throw ConfigError("selena parts must be >= 2");
  if (target_train.size() < static_cast<std::size_t>(parts)) {
    throw ConfigError("selena: " + std::to_string(target_train.size()) +
                      " samples starve " + std::to_string(parts) + " partitions");
  }
  SelenaLabels out;
  std::vector<std::size_t> order(target_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng part_rng = MakeRng(cfg.seed, {TagOf("partitions")});
  std::shuffle(order.begin(), order.end(), part_rng);
  out.partition_of.assign(target_train.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.partition_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(parts));
  }
  out.soft_targets = Matrix::Zero(static_cast<Eigen::Index>(target_train.size()),
                                  target_train.num_classes);
  for (int k = 0; k < parts; ++k) {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> held_rows;
    for (std::size_t i = 0; i < target_train.size(); ++i) {
      (out.partition_of[i] == k ? held_rows : train_rows).push_back(i);
    }
    TransferConfig sub_cfg = cfg;
    sub_cfg.seed = DeriveSeed(cfg.seed, {TagOf("submodel"), static_cast<std::uint64_t>(k)});
    const SampleSet sub_train = target_train.Subset(train_rows);
    Network sub = TargetInit(arch, target_train, sub_cfg.seed);
    internal::TrainCrossEntropy(sub, sub_train, sub_cfg.epochs, sub_cfg.batch_size, sub_cfg.lr,
                                sub_cfg.seed, Regularizer::None());
    const Matrix probs = Softmax(Forward(sub, internal::GatherRows(target_train.features,
                                                                   held_rows)));
    for (std::size_t j = 0; j < held_rows.size(); ++j) {
      out.soft_targets.row(static_cast<Eigen::Index>(held_rows[j])) =
          probs.row(static_cast<Eigen::Index>(j));
    }
    out.submodels.push_back(std::move(sub));
  }
  return out;
}

// Self-distillation baseline: the final model fits the leave-one-partition-out
// soft labels.
inline TrainedModel TrainSelenaLite(const Architecture& arch, const SampleSet& target_train,
                                    const SampleSet& eval_set, int parts,
                                    const TransferConfig& cfg) {
  const SelenaLabels labels = SelenaSoftLabels(arch, target_train, parts, cfg);
  Network net = TargetInit(arch, target_train, cfg.seed);
  internal::RunSgd(net, target_train.size(), cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed,
                   [&](const Network& current, std::span<const std::size_t> rows) {
                     return SoftTargetLossAndGrads(
                         current, internal::GatherRows(target_train.features, rows),
                         internal::GatherRows(labels.soft_targets, rows));
                   });
  Provenance p;
  p.variant = Variant::kSelena;
  p.parts = parts;
  return internal::Finish(std::move(net), p, target_train, eval_set);
}

// Everything needed to re-run a target training pipeline on different data;
// shadow models reuse it verbatim.
struct TrainingProcedure {
  Variant variant = Variant::kNtl;
  Architecture arch;
  TransferConfig loop;
  std::shared_ptr<const Network> pretrained;  // required for kTl
  double lambda = 0.0;
  double clip = 1.0;
  double noise_multiplier = 0.0;
  int parts = 4;
};

inline TrainedModel TrainTarget(const TrainingProcedure& proc, const SampleSet& train,
                                const SampleSet& eval) {
  switch (proc.variant) {
    case Variant::kNtl:
      return TrainNtl(proc.arch, train, eval, proc.loop);
    case Variant::kTl:
      if (!proc.pretrained) throw ConfigError("tl variant needs a pretrained network");
      return TransferStage1(*proc.pretrained, proc.loop, train, eval);
    case Variant::kL1:
      return TrainRegularized(proc.arch, train, eval, Regularizer::L1(proc.lambda), proc.loop);
    case Variant::kL2:
      return TrainRegularized(proc.arch, train, eval, Regularizer::L2(proc.lambda), proc.loop);
    case Variant::kDp:
      return TrainDpLite(proc.arch, train, eval, proc.clip, proc.noise_multiplier, proc.loop);
    case Variant::kSelena:
      return TrainSelenaLite(proc.arch, train, eval, proc.parts, proc.loop);
  }
  throw ConfigError("unhandled variant");
}

}  // namespace miadip

#endif  // MIADIP_TRAIN_HPP_
