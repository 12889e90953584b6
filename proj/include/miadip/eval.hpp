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

// End-to-end experiments: data -> training -> optional smoothing -> attacks
// -> metrics, plus grid sweeps over them.

#ifndef MIADIP_EVAL_HPP_
#define MIADIP_EVAL_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "miadip/attack.hpp"
#include "miadip/checkpoint.hpp"
#include "miadip/config.hpp"
#include "miadip/core.hpp"
#include "miadip/data.hpp"
#include "miadip/metrics.hpp"
#include "miadip/parallel.hpp"
#include "miadip/smooth.hpp"
#include "miadip/train.hpp"

namespace miadip {

// Fraction of argmax-correct predictions. Sample i uses smoothing key
// key_offset + i.
inline double ClassificationAccuracy(const AttackTarget& model, const SampleSet& set,
                                     std::uint64_t key_offset = 0) {
  if (set.empty()) throw MetricError("accuracy of an empty set is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    correct += model.Label(RowSpan(set.features, static_cast<Eigen::Index>(i)),
                           key_offset + i) == set.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

inline double ClassificationAccuracy(const Network& net, const SampleSet& set) {
  return ClassificationAccuracy(AttackTarget(net), set);
}

// Smoothing keys for accuracy samples live far above attack sample ids.
inline constexpr std::uint64_t kAccuracyKeyOffset = std::uint64_t{1} << 40;

struct AttackOutcome {
  bool enabled = false;
  Threshold best;                   // eval-set-best threshold, an upper bound
  std::optional<Threshold> shadow;  // threshold calibrated on a shadow model
  ConfusionCounts counts;           // counts under the configured threshold mode

  double asr() const { return counts.asr(); }
};

struct ExperimentReport {
  std::string config_text;
  Variant variant = Variant::kTl;
  double m_frac = 0.0;
  int frozen_layers = 0;
  int n = 0;
  double sigma = 0.0;      // relative units
  double sigma_abs = 0.0;  // feature units
  std::uint64_t seed = 0;
  AttackOutcome bim;
  AttackOutcome hsj;
  AttackOutcome entropy;
  double acc = 0.0;         // nonmember accuracy of the deployed (possibly smoothed) model
  double stage1_acc = 0.0;  // nonmember accuracy of the unsmoothed model
  double train_acc = 0.0;
  double gap = 0.0;
  std::int64_t queries_total = 0;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;
  std::optional<SigmaSelection> tuning;
  std::vector<AttackRecord> bim_records;
  std::vector<AttackRecord> hsj_records;
  TrainedModel model;

  // Every stored ASR equals 0.5 (TPR + TNR) of its stored counts.
  bool SelfConsistent() const {
    for (const AttackOutcome* o : {&bim, &hsj, &entropy}) {
      if (!o->enabled) continue;
      const ConfusionMetrics m = MetricsFromCounts(o->counts);
      if (m.asr != 0.5 * (m.tpr + m.tnr) && std::abs(m.asr - 0.5 * (m.tpr + m.tnr)) > 1e-15) {
        return false;
      }
      if (m.asr != o->asr()) return false;
    }
    return true;
  }
};

inline PretrainedModel PretrainSource(const ExperimentConfig& cfg, const SampleSet& source) {
  SourceTrainConfig scfg = cfg.source;
  scfg.seed = DeriveSeed(cfg.seed, {TagOf("source-train")});
  return TrainSource(cfg.arch(), source, scfg);
}

// Pretrained source networks keyed by everything that determines them.
class SourceCache {
 public:
  std::shared_ptr<const PretrainedModel> Get(const ExperimentConfig& cfg,
                                             const SampleSet& source) {
    const std::string key = Key(cfg);
    std::shared_future<std::shared_ptr<const PretrainedModel>> fut;
    std::promise<std::shared_ptr<const PretrainedModel>> promise;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
        ++trainings_;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const PretrainedModel>(PretrainSource(cfg, source)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  int trainings() const {
    std::lock_guard<std::mutex> lock(mu_);
    return trainings_;
  }

 private:
  static std::string Key(const ExperimentConfig& cfg) {
    return std::to_string(cfg.seed) + "|" + FormatDouble(cfg.task.overlap) + "|" +
           std::to_string(cfg.task.dim) + "|" + std::to_string(cfg.task.source_n) + "|" +
           std::to_string(cfg.task.source_classes) + "|" + std::to_string(cfg.task.target_classes) +
           "|" + FormatDouble(cfg.task.class_separation) + "|" + FormatDouble(cfg.task.noise_std) +
           "|" + config_internal::Format(cfg.hidden) + "|" + std::to_string(cfg.source.epochs) +
           "|" + FormatDouble(cfg.source.lr) + "|" + std::to_string(cfg.source.batch_size);
  }

  mutable std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const PretrainedModel>>> entries_;
  int trainings_ = 0;
};

struct RunOptions {
  int jobs = 1;
  std::optional<std::filesystem::path> out_dir;
  SourceCache* cache = nullptr;
};

namespace internal {

// Raw attack outputs against one deployed model.
struct AttackPass {
  std::vector<DistanceEstimate> bim;
  std::vector<DistanceEstimate> hsj;
  std::vector<double> entropy;
  std::optional<Threshold> bim_best;
  std::optional<Threshold> hsj_best;
  std::optional<Threshold> entropy_best;
  double accuracy = 0.0;

  // Strongest label-only attacker under eval-set-best thresholds.
  double MeasuredAsr() const {
    double asr = 0.0;
    bool any = false;
    for (const auto* t : {&bim_best, &hsj_best}) {
      if (*t) {
        asr = std::max(asr, (*t)->asr());
        any = true;
      }
    }
    if (!any && entropy_best) asr = entropy_best->asr();
    return asr;
  }
};

// Sigma is tuned against a single attacker: BIM when enabled (cheapest),
// otherwise HSJ, otherwise the entropy attack.
inline AttackSettings TuningAttack(const AttackSettings& full) {
  AttackSettings probe = full;
  probe.hsj = full.hsj && !full.bim;
  probe.entropy = full.entropy && !full.bim && !full.hsj;
  return probe;
}

inline std::vector<double> Deltas(const std::vector<DistanceEstimate>& estimates) {
  std::vector<double> d;
  d.reserve(estimates.size());
  for (const auto& e : estimates) d.push_back(e.delta_hat);
  return d;
}

inline AttackPass RunAttackPass(const AttackTarget& target, const SampleSet& bundle,
                                const SampleSet& accuracy_set, const AttackSettings& settings,
                                std::uint64_t seed, int jobs, bool with_accuracy) {
  AttackPass pass;
  if (settings.bim) {
    pass.bim = EstimateDistances(target, bundle, 0, settings.budget, AttackMode::kBim, seed, jobs);
    pass.bim_best = CalibrateThreshold(Deltas(pass.bim), bundle.membership);
  }
  if (settings.hsj) {
    pass.hsj = EstimateDistances(target, bundle, 0, settings.budget, AttackMode::kHsj, seed, jobs);
    pass.hsj_best = CalibrateThreshold(Deltas(pass.hsj), bundle.membership);
  }
  if (settings.entropy) {
    pass.entropy = EntropyScores(target, bundle, 0);
    pass.entropy_best = CalibrateEntropyThreshold(pass.entropy, bundle.membership);
  }
  if (with_accuracy) pass.accuracy = ClassificationAccuracy(target, accuracy_set, kAccuracyKeyOffset);
  return pass;
}

inline ConfusionCounts CountsAt(const std::vector<DistanceEstimate>& estimates,
                                std::span<const std::uint8_t> truths, double tau) {
  std::vector<std::uint8_t> pred;
  for (const auto& e : estimates) pred.push_back(PredictMemberByDistance(e.delta_hat, tau));
  return CountConfusion(pred, truths);
}

inline ConfusionCounts EntropyCountsAt(const std::vector<double>& scores,
                                       std::span<const std::uint8_t> truths, double tau) {
  std::vector<std::uint8_t> pred;
  for (double s : scores) pred.push_back(PredictMemberByEntropy(s, tau));
  return CountConfusion(pred, truths);
}

inline SmoothingConfig SmoothingFor(const SmoothingSettings& s, double sigma_abs,
                                    std::uint64_t master_seed) {
  SmoothingConfig c;
  c.sigma = sigma_abs;
  c.num_samples = s.num_samples;
  c.master_seed = master_seed;
  c.aggregation = s.aggregation;
  c.noise_mode = s.noise_mode;
  return c;
}

template <class Fn>
auto Stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("[") + name + "] " + e.what());
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace internal

inline TrainingProcedure ProcedureFor(const ExperimentConfig& cfg,
                                      std::shared_ptr<const Network> pretrained) {
  TrainingProcedure proc;
  proc.variant = cfg.variant;
  proc.arch = cfg.arch();
  proc.loop = cfg.transfer;
  proc.loop.frozen_layers = cfg.variant == Variant::kTl ? cfg.FrozenLayers() : 0;
  proc.loop.seed = DeriveSeed(cfg.seed, {TagOf("target-train")});
  proc.pretrained = std::move(pretrained);
  proc.lambda = cfg.lambda;
  proc.clip = cfg.dp_clip;
  proc.noise_multiplier = cfg.dp_noise;
  proc.parts = cfg.selena_parts;
  return proc;
}

inline nlohmann::json ThresholdToJson(const Threshold& t) {
  return {{"tau", FormatDouble(t.tau)},
          {"tp", t.counts.tp},
          {"fn", t.counts.fn},
          {"tn", t.counts.tn},
          {"fp", t.counts.fp},
          {"asr", t.counts.asr()}};
}

inline nlohmann::json ReportToJson(const ExperimentReport& r) {
  nlohmann::json attacks = nlohmann::json::object();
  const std::pair<const char*, const AttackOutcome*> outcomes[] = {
      {"bim", &r.bim}, {"hsj", &r.hsj}, {"entropy", &r.entropy}};
  for (const auto& [name, o] : outcomes) {
    if (!o->enabled) continue;
    nlohmann::json j = {{"tp", o->counts.tp},
                        {"fn", o->counts.fn},
                        {"tn", o->counts.tn},
                        {"fp", o->counts.fp},
                        {"tpr", o->counts.tpr()},
                        {"tnr", o->counts.tnr()},
                        {"asr", o->asr()},
                        {"best", ThresholdToJson(o->best)}};
    if (o->shadow) j["shadow"] = ThresholdToJson(*o->shadow);
    attacks[name] = j;
  }
  nlohmann::json j = {{"config", r.config_text},
                      {"variant", VariantName(r.variant)},
                      {"provenance", r.model.provenance.ToString()},
                      {"m_frac", r.m_frac},
                      {"frozen_layers", r.frozen_layers},
                      {"n", r.n},
                      {"sigma", r.sigma},
                      {"sigma_abs", r.sigma_abs},
                      {"seed", r.seed},
                      {"attacks", attacks},
                      {"acc", r.acc},
                      {"stage1_acc", r.stage1_acc},
                      {"train_acc", r.train_acc},
                      {"gap", r.gap},
                      {"queries_total", r.queries_total},
                      {"warnings", r.warnings}};
  if (r.tuning) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& m : r.tuning->table) {
      table.push_back({{"sigma", m.sigma}, {"asr", m.asr}, {"acc", m.accuracy}});
    }
    j["tuning"] = {{"selected", r.tuning->sigma},
                   {"flagged", r.tuning->flagged},
                   {"accuracy_floor", r.tuning->accuracy_floor},
                   {"table", table}};
  }
  return j;
}

inline nlohmann::json ModelMetadata(const TrainedModel& m, const std::string& config_text) {
  return {{"provenance", m.provenance.ToString()},
          {"variant", VariantName(m.provenance.variant)},
          {"frozen_layers", m.provenance.frozen_layers},
          {"train_accuracy", m.train_accuracy},
          {"eval_accuracy", m.eval_accuracy},
          {"gap", m.gap()},
          {"config", config_text}};
}

inline void SaveTrainedModel(const TrainedModel& m, const std::string& config_text,
                             const std::filesystem::path& checkpoint) {
  SaveCheckpoint(m.network, checkpoint);
  std::filesystem::path meta = checkpoint;
  meta.replace_extension(".meta.json");
  WriteTextFile(meta, ModelMetadata(m, config_text).dump(1) + "\n");
}

// Config text that re-runs exactly this experiment as a one-cell sweep.
inline std::string SingleCellConfigText(const ExperimentConfig& cfg) {
  RunConfig rc;
  rc.experiment = cfg;
  rc.sweep.variants = {cfg.variant};
  rc.sweep.m_fracs = {cfg.m_frac};
  rc.sweep.n_sizes = {cfg.task.target_train_n};
  rc.sweep.sigmas = {cfg.smoothing.sigma};
  rc.sweep.seeds = {cfg.seed};
  return RunConfigToText(rc);
}

inline TaskPair GenerateTask(const ExperimentConfig& cfg) {
  TaskPairConfig task = cfg.task;
  task.seed = cfg.seed;
  return internal::Stage("data", [&] { return GenTaskPair(task); });
}

// Pretrained source network for the transfer variant, null otherwise.
inline std::shared_ptr<const Network> SourceFor(const ExperimentConfig& cfg, const TaskPair& pair,
                                                SourceCache* cache,
                                                std::vector<std::string>* warnings) {
  if (cfg.variant != Variant::kTl) return nullptr;
  std::shared_ptr<const PretrainedModel> source = internal::Stage("train-source", [&] {
    if (cache) return cache->Get(cfg, pair.source);
    SourceCache local;
    return local.Get(cfg, pair.source);
  });
  if (source->warning && warnings) warnings->push_back(*source->warning);
  return std::shared_ptr<const Network>(source, &source->network);
}

// Smoothing (fixed or tuned sigma), the enabled attacks and their metrics
// against an already trained model. `proc` is only used to train a shadow
// model when cfg.attack.shadow is set.
inline ExperimentReport EvaluateModel(const ExperimentConfig& cfg, const TaskPair& pair,
                                      const TrainedModel& model, const TrainingProcedure& proc,
                                      const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config_text = SingleCellConfigText(cfg);
  report.variant = cfg.variant;
  report.m_frac = cfg.variant == Variant::kTl ? cfg.m_frac : 0.0;
  report.frozen_layers = model.provenance.frozen_layers;
  report.n = static_cast<int>(pair.target_train.size());
  report.seed = cfg.seed;
  report.model = model;
  report.train_acc = model.train_accuracy;
  report.stage1_acc = model.eval_accuracy;

  const auto n_eval = std::min<std::size_t>(pair.target_train.size(),
                                            static_cast<std::size_t>(cfg.attack.eval_members));
  if (pair.target_eval.size() < n_eval) {
    throw StageError("attack", "target_eval_n is smaller than the member evaluation set");
  }
  const SampleSet bundle = Concatenate(pair.target_train.Head(n_eval).WithMembership(1),
                                       pair.target_eval.Head(n_eval).WithMembership(0));
  const double feature_std = MeanFeatureStd(pair.target_train);
  const std::uint64_t smooth_seed = DeriveSeed(cfg.seed, {TagOf("smooth")});
  const std::uint64_t attack_seed = DeriveSeed(cfg.seed, {TagOf("attack")});
  const int jobs = opts.jobs;

  auto pass_for = [&](const Network& net, double sigma_rel, double feat_std,
                      std::uint64_t sseed, const SampleSet& attack_bundle,
                      const SampleSet& acc_set, const AttackSettings& attacks) {
    if (sigma_rel == 0.0) {
      return internal::RunAttackPass(AttackTarget(net), attack_bundle, acc_set, attacks,
                                     attack_seed, jobs, true);
    }
    const SmoothedClassifier sc(
        net, internal::SmoothingFor(cfg.smoothing, sigma_rel * feat_std, sseed));
    return internal::RunAttackPass(AttackTarget(sc), attack_bundle, acc_set, attacks,
                                   attack_seed, jobs, true);
  };

  internal::AttackPass pass;
  double sigma_rel = cfg.smoothing.sigma;
  internal::Stage("attack", [&] {
    if (cfg.smoothing.tune) {
      const AttackSettings probe = internal::TuningAttack(cfg.attack);
      SigmaSelection sel = TuneSigma(
          cfg.smoothing.candidates,
          [&](double s) {
            const internal::AttackPass p = pass_for(model.network, s, feature_std, smooth_seed,
                                                    bundle, pair.target_eval, probe);
            return SigmaMeasurement{s, p.MeasuredAsr(), p.accuracy};
          },
          cfg.smoothing.acc_tolerance);
      if (sel.flagged) report.warnings.push_back("no sigma candidate met the accuracy floor");
      sigma_rel = sel.sigma;
      report.tuning = std::move(sel);
    }
    pass = pass_for(model.network, sigma_rel, feature_std, smooth_seed, bundle, pair.target_eval,
                    cfg.attack);
    return 0;
  });
  report.sigma = sigma_rel;
  report.sigma_abs = sigma_rel * feature_std;
  report.acc = pass.accuracy;
  report.gap = report.train_acc - report.acc;

  std::optional<internal::AttackPass> shadow_pass;
  if (cfg.attack.shadow) {
    shadow_pass = internal::Stage("shadow", [&] {
      TaskPairConfig task = cfg.task;
      task.seed = cfg.seed;
      const std::size_t n_train = pair.target_train.size();
      const SampleSet pool = DrawTargetSamples(task, pair.target_prototypes,
                                               static_cast<int>(2 * n_train), "adversary", 0);
      const ShadowModel shadow = TrainShadow(proc, pool, n_train, pair.target_train,
                                             DeriveSeed(cfg.seed, {TagOf("shadow")}));
      const SampleSet shadow_bundle =
          Concatenate(shadow.members.Head(n_eval), shadow.nonmembers.Head(n_eval));
      return pass_for(shadow.model.network, sigma_rel, MeanFeatureStd(shadow.members),
                      DeriveSeed(cfg.seed, {TagOf("shadow-smooth")}), shadow_bundle,
                      shadow.nonmembers, cfg.attack);
    });
  }

  const auto truths = std::span<const std::uint8_t>(bundle.membership);
  auto finish_label_only = [&](AttackOutcome& out, const std::vector<DistanceEstimate>& est,
                               const std::optional<Threshold>& best,
                               const std::optional<Threshold>& shadow_best,
                               std::vector<AttackRecord>& records) {
    out.enabled = true;
    out.best = *best;
    out.counts = best->counts;
    double tau = best->tau;
    if (shadow_best) {
      const double shadow_tau = shadow_best->tau;
      const ConfusionCounts c = internal::CountsAt(est, truths, shadow_tau);
      out.shadow = Threshold{shadow_tau, c};
      if (cfg.attack.threshold == ThresholdMode::kShadow) {
        out.counts = out.shadow->counts;
        tau = shadow_tau;
      }
    }
    records = ThresholdDistances(est, truths, tau).records;
    for (const auto& e : est) report.queries_total += e.queries_used;
  };
  if (cfg.attack.bim) {
    finish_label_only(report.bim, pass.bim, pass.bim_best,
                      shadow_pass ? shadow_pass->bim_best : std::nullopt, report.bim_records);
  }
  if (cfg.attack.hsj) {
    finish_label_only(report.hsj, pass.hsj, pass.hsj_best,
                      shadow_pass ? shadow_pass->hsj_best : std::nullopt, report.hsj_records);
  }
  if (cfg.attack.entropy) {
    report.entropy.enabled = true;
    report.entropy.best = *pass.entropy_best;
    report.entropy.counts = pass.entropy_best->counts;
    if (shadow_pass) {
      const double tau = shadow_pass->entropy_best->tau;
      const ConfusionCounts c = internal::EntropyCountsAt(pass.entropy, truths, tau);
      report.entropy.shadow = Threshold{tau, c};
      if (cfg.attack.threshold == ThresholdMode::kShadow) {
        report.entropy.counts = report.entropy.shadow->counts;
      }
    }
  }
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0).count();
  return report;
}

inline void PersistReport(const ExperimentReport& report, const std::filesystem::path& dir,
                          bool with_model = true) {
  internal::Stage("persist", [&] {
    if (with_model) SaveTrainedModel(report.model, report.config_text, dir / "model.json");
    if (report.bim.enabled) {
      WriteTextFile(dir / "records_bim.csv", AttackRecordsToCsv(report.bim_records));
    }
    if (report.hsj.enabled) {
      WriteTextFile(dir / "records_hsj.csv", AttackRecordsToCsv(report.hsj_records));
    }
    WriteTextFile(dir / "report.json", ReportToJson(report).dump(1) + "\n");
    return 0;
  });
}

// Data, Stage-1 training, optional smoothing (fixed or tuned sigma), the
// enabled attacks and their metrics for one configuration and seed.
inline ExperimentReport RunExperiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  internal::Stage("config", [&] { cfg.Validate(); return 0; });
  const TaskPair pair = GenerateTask(cfg);
  std::vector<std::string> warnings;
  const TrainingProcedure proc = ProcedureFor(cfg, SourceFor(cfg, pair, opts.cache, &warnings));
  const TrainedModel model = internal::Stage("train", [&] {
    return TrainTarget(proc, pair.target_train, pair.target_eval);
  });
  ExperimentReport report = EvaluateModel(cfg, pair, model, proc, opts);
  warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  report.warnings = std::move(warnings);
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0).count();
  if (opts.out_dir) PersistReport(report, *opts.out_dir);
  return report;
}

struct ResultRow {
  std::size_t cell_id = 0;
  std::string variant;
  double m_frac = 0.0;
  int n = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> asr_bim;
  std::optional<double> asr_hsj;
  std::optional<double> asr_entropy;
  double acc = 0.0;
  double train_acc = 0.0;
  double gap = 0.0;
  std::int64_t queries_total = 0;
  double wall_ms = 0.0;
};

inline constexpr const char* kResultsHeader =
    "cell_id,variant,M_frac,N,sigma,seed,asr_bim,asr_hsj,asr_entropy,acc,train_acc,gap,"
    "queries_total,wall_ms";

inline ResultRow RowFromReport(std::size_t cell_id, const ExperimentReport& r) {
  ResultRow row;
  row.cell_id = cell_id;
  row.variant = VariantName(r.variant);
  row.m_frac = r.m_frac;
  row.n = r.n;
  row.sigma = r.sigma;
  row.seed = r.seed;
  if (r.bim.enabled) row.asr_bim = r.bim.asr();
  if (r.hsj.enabled) row.asr_hsj = r.hsj.asr();
  if (r.entropy.enabled) row.asr_entropy = r.entropy.asr();
  row.acc = r.acc;
  row.train_acc = r.train_acc;
  row.gap = r.gap;
  row.queries_total = r.queries_total;
  row.wall_ms = r.wall_ms;
  return row;
}

inline std::string ResultsCsv(const std::vector<ResultRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? FormatDouble(*v) : std::string(); };
  std::string out = std::string(kResultsHeader) + "\n";
  for (const ResultRow& r : rows) {
    out += std::to_string(r.cell_id) + "," + r.variant + "," + FormatDouble(r.m_frac) + "," +
           std::to_string(r.n) + "," + FormatDouble(r.sigma) + "," + std::to_string(r.seed) +
           "," + opt(r.asr_bim) + "," + opt(r.asr_hsj) + "," + opt(r.asr_entropy) + "," +
           FormatDouble(r.acc) + "," + FormatDouble(r.train_acc) + "," + FormatDouble(r.gap) +
           "," + std::to_string(r.queries_total) + "," + FormatDouble(r.wall_ms) + "\n";
  }
  return out;
}

inline std::vector<ResultRow> ParseResultsCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("no rows: results file is empty", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw ParseError("unexpected results header", line_no);
  std::vector<ResultRow> rows;
  auto num = [&](std::string_view s) {
    double v = 0.0;
    if (!ParseDouble(s, v)) throw ParseError("bad number '" + std::string(s) + "'", line_no);
    return v;
  };
  auto opt = [&](std::string_view s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return num(s);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = SplitCsvLine(line);
    if (cells.size() != 14) throw ParseError("expected 14 columns", line_no);
    ResultRow r;
    r.cell_id = static_cast<std::size_t>(num(cells[0]));
    r.variant = std::string(cells[1]);
    r.m_frac = num(cells[2]);
    r.n = static_cast<int>(num(cells[3]));
    r.sigma = num(cells[4]);
    r.seed = static_cast<std::uint64_t>(num(cells[5]));
    r.asr_bim = opt(cells[6]);
    r.asr_hsj = opt(cells[7]);
    r.asr_entropy = opt(cells[8]);
    r.acc = num(cells[9]);
    r.train_acc = num(cells[10]);
    r.gap = num(cells[11]);
    r.queries_total = static_cast<std::int64_t>(num(cells[12]));
    r.wall_ms = num(cells[13]);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct SweepCell {
  std::size_t cell_id = 0;
  ExperimentConfig config;
};

// Cross product in the order variant, M fraction, N, sigma, seed. M only
// varies for the transfer variant; sigma collapses to one cell when tuned.
inline std::vector<SweepCell> ExpandGrid(const RunConfig& rc) {
  std::vector<SweepCell> cells;
  const SweepGrid& g = rc.sweep;
  for (Variant v : g.variants) {
    const std::vector<double> ms = v == Variant::kTl ? g.m_fracs : std::vector<double>{0.0};
    const std::vector<double> sigmas =
        rc.experiment.smoothing.tune ? std::vector<double>{0.0} : g.sigmas;
    for (double m : ms) {
      for (int n : g.n_sizes) {
        for (double s : sigmas) {
          for (std::uint64_t seed : g.seeds) {
            SweepCell cell;
            cell.cell_id = cells.size();
            cell.config = rc.experiment;
            cell.config.variant = v;
            cell.config.m_frac = m;
            cell.config.task.target_train_n = n;
            cell.config.smoothing.sigma = s;
            cell.config.seed = seed;
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

struct SweepFailure {
  std::size_t cell_id = 0;
  std::string message;
};

struct SweepResult {
  std::vector<std::size_t> cell_ids;  // parallel to reports, ascending
  std::vector<ExperimentReport> reports;
  std::vector<SweepFailure> failures;
  int source_trainings = 0;

  std::vector<ResultRow> Rows() const {
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      rows.push_back(RowFromReport(cell_ids[i], reports[i]));
    }
    return rows;
  }
};

// Runs every grid cell on a pool of opts.jobs workers. A failing cell is
// recorded and the rest continue. Output order is by cell id regardless of
// scheduling. When opts.out_dir is set each cell persists under
// <out>/cells/<id>/.
inline SweepResult RunSweep(const RunConfig& rc, const RunOptions& opts = {}) {
  rc.experiment.Validate();
  const std::vector<SweepCell> cells = ExpandGrid(rc);
  if (cells.empty()) throw ConfigError("sweep grid is empty");
  SourceCache local_cache;
  SourceCache* cache = opts.cache ? opts.cache : &local_cache;
  std::vector<std::optional<ExperimentReport>> reports(cells.size());
  std::vector<std::optional<std::string>> errors(cells.size());
  ParallelFor(cells.size(), opts.jobs, [&](std::size_t i) {
    RunOptions cell_opts;
    cell_opts.jobs = 1;
    cell_opts.cache = cache;
    if (opts.out_dir) cell_opts.out_dir = *opts.out_dir / "cells" / std::to_string(cells[i].cell_id);
    try {
      reports[i] = RunExperiment(cells[i].config, cell_opts);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (reports[i]) {
      result.cell_ids.push_back(cells[i].cell_id);
      result.reports.push_back(std::move(*reports[i]));
    } else {
      result.failures.push_back({cells[i].cell_id, errors[i].value_or("unknown failure")});
    }
  }
  result.source_trainings = cache->trainings();
  return result;
}

struct SummaryRow {
  std::string variant;
  double m_frac = 0.0;
  int n = 0;
  double sigma = 0.0;
  int seeds = 0;
  double asr_bim = NAN;
  double asr_hsj = NAN;
  double asr_entropy = NAN;
  double acc = 0.0;
  double train_acc = 0.0;
  double gap = 0.0;
};

// Means over seeds for each (variant, M fraction, N, sigma) group, in first
// appearance order.
inline std::vector<SummaryRow> Summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::array<int, 3>> attack_counts;
  for (const ResultRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.variant == r.variant && s.m_frac == r.m_frac && s.n == r.n && s.sigma == r.sigma;
    });
    if (it == out.end()) {
      SummaryRow s;
      s.variant = r.variant;
      s.m_frac = r.m_frac;
      s.n = r.n;
      s.sigma = r.sigma;
      s.asr_bim = s.asr_hsj = s.asr_entropy = 0.0;
      out.push_back(s);
      attack_counts.push_back({0, 0, 0});
      it = out.end() - 1;
    }
    auto& counts = attack_counts[static_cast<std::size_t>(it - out.begin())];
    ++it->seeds;
    it->acc += r.acc;
    it->train_acc += r.train_acc;
    it->gap += r.gap;
    if (r.asr_bim) { it->asr_bim += *r.asr_bim; ++counts[0]; }
    if (r.asr_hsj) { it->asr_hsj += *r.asr_hsj; ++counts[1]; }
    if (r.asr_entropy) { it->asr_entropy += *r.asr_entropy; ++counts[2]; }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    SummaryRow& s = out[i];
    s.acc /= s.seeds;
    s.train_acc /= s.seeds;
    s.gap /= s.seeds;
    s.asr_bim = attack_counts[i][0] ? s.asr_bim / attack_counts[i][0] : NAN;
    s.asr_hsj = attack_counts[i][1] ? s.asr_hsj / attack_counts[i][1] : NAN;
    s.asr_entropy = attack_counts[i][2] ? s.asr_entropy / attack_counts[i][2] : NAN;
  }
  return out;
}

inline std::string SummaryTable(const std::vector<SummaryRow>& rows) {
  auto pct = [](double v) {
    if (std::isnan(v)) return std::string("    -");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%5.1f", 100.0 * v);
    return std::string(buf);
  };
  std::string out =
      "variant  M_frac     N  sigma  seeds  ASR_bim  ASR_hsj  ASR_ent    ACC  train    gap\n";
  for (const SummaryRow& s : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-7s  %6.3f  %4d  %5.3f  %5d    %s    %s    %s  %s  %s  %s\n",
                  s.variant.c_str(), s.m_frac, s.n, s.sigma, s.seeds, pct(s.asr_bim).c_str(),
                  pct(s.asr_hsj).c_str(), pct(s.asr_entropy).c_str(), pct(s.acc).c_str(),
                  pct(s.train_acc).c_str(), pct(s.gap).c_str());
    out += buf;
  }
  return out;
}

}  // namespace miadip

#endif  // MIADIP_EVAL_HPP_
