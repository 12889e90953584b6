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

// miadip command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "miadip/checkpoint.hpp"
#include "miadip/config.hpp"
#include "miadip/eval.hpp"
#include "miadip/plot.hpp"

namespace fs = std::filesystem;
using namespace miadip;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> variant;
};

void AddCommon(CLI::App* cmd, CommonFlags& f, bool with_variant) {
  cmd->add_option("--config", f.config, "config file (TOML-style sections)");
  cmd->add_option("--out", f.out, "output directory (default: $MIADIP_OUT or ./miadip_out)");
  cmd->add_option("--seed", f.seed, "experiment seed (sweep: replaces the seed list)");
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  if (with_variant) {
    cmd->add_option("--variant", f.variant, "training variant")
        ->check(CLI::IsMember({"ntl", "tl", "l1", "l2", "dp", "selena"}));
  }
}

RunConfig LoadConfig(const CommonFlags& f) {
  if (!f.config.empty() && !fs::is_regular_file(f.config)) {
    throw ConfigError("config file " + f.config + " not found");
  }
  RunConfig rc = f.config.empty() ? RunConfig{} : LoadRunConfig(f.config);
  if (f.seed) {
    rc.experiment.seed = *f.seed;
    rc.sweep.seeds = {*f.seed};
  }
  if (f.jobs) rc.jobs = *f.jobs;
  if (f.variant) {
    rc.experiment.variant = ParseVariant(*f.variant);
    rc.sweep.variants = {rc.experiment.variant};
  }
  rc.experiment.Validate();
  return rc;
}

fs::path OutDir(const CommonFlags& f) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("MIADIP_OUT"); env && *env) return env;
  return "miadip_out";
}

void WriteSnapshot(const RunConfig& rc, const fs::path& out) {
  WriteTextFile(out / "config.toml", RunConfigToText(rc));
}

void PrintReportLine(const ExperimentReport& r) {
  std::printf("%s  train_acc=%.4f acc=%.4f gap=%.4f", r.model.provenance.ToString().c_str(),
              r.train_acc, r.acc, r.gap);
  if (r.bim.enabled) std::printf(" asr_bim=%.4f", r.bim.asr());
  if (r.hsj.enabled) std::printf(" asr_hsj=%.4f", r.hsj.asr());
  if (r.entropy.enabled) std::printf(" asr_entropy=%.4f", r.entropy.asr());
  std::printf(" sigma=%g\n", r.sigma);
}

int TrainSourceCmd(const CommonFlags& f) {
  const RunConfig rc = LoadConfig(f);
  const fs::path out = OutDir(f);
  const TaskPair pair = GenerateTask(rc.experiment);
  const PretrainedModel source = internal::Stage("train-source", [&] {
    return PretrainSource(rc.experiment, pair.source);
  });
  WriteSnapshot(rc, out);
  SaveCheckpoint(source.network, out / "source.json");
  nlohmann::json meta = {{"train_accuracy", source.train_accuracy},
                         {"config", RunConfigToText(rc)}};
  if (source.warning) {
    meta["warning"] = *source.warning;
    std::cerr << "warning: " << *source.warning << "\n";
  }
  WriteTextFile(out / "source.meta.json", meta.dump(1) + "\n");
  std::printf("source train_acc=%.4f -> %s\n", source.train_accuracy,
              (out / "source.json").string().c_str());
  return 0;
}

std::shared_ptr<const Network> LoadSource(const ExperimentConfig& cfg, const fs::path& path) {
  if (cfg.variant != Variant::kTl) return nullptr;
  if (!fs::exists(path)) {
    throw StageError("transfer", "source checkpoint " + path.string() +
                                     " not found; run train-source first or pass --source");
  }
  return std::make_shared<const Network>(LoadCheckpoint(path));
}

int TransferCmd(const CommonFlags& f, const std::string& source_path) {
  const RunConfig rc = LoadConfig(f);
  const fs::path out = OutDir(f);
  const ExperimentConfig& cfg = rc.experiment;
  const TaskPair pair = GenerateTask(cfg);
  const fs::path src = source_path.empty() ? out / "source.json" : fs::path(source_path);
  const TrainingProcedure proc = ProcedureFor(cfg, LoadSource(cfg, src));
  const TrainedModel model = internal::Stage("train", [&] {
    return TrainTarget(proc, pair.target_train, pair.target_eval);
  });
  WriteSnapshot(rc, out);
  SaveTrainedModel(model, SingleCellConfigText(cfg), out / "target.json");
  std::printf("%s train_acc=%.4f eval_acc=%.4f gap=%.4f -> %s\n",
              model.provenance.ToString().c_str(), model.train_accuracy, model.eval_accuracy,
              model.gap(), (out / "target.json").string().c_str());
  return 0;
}

int AttackCmd(const CommonFlags& f, const std::string& model_path,
              const std::string& source_path) {
  const RunConfig rc = LoadConfig(f);
  const fs::path out = OutDir(f);
  const ExperimentConfig& cfg = rc.experiment;
  const TaskPair pair = GenerateTask(cfg);
  const fs::path path = model_path.empty() ? out / "target.json" : fs::path(model_path);
  if (!fs::exists(path)) {
    throw StageError("attack", "model checkpoint " + path.string() +
                                   " not found; run transfer first or pass --model");
  }
  TrainedModel model;
  model.network = LoadCheckpoint(path);
  model.provenance.variant = cfg.variant;
  model.provenance.frozen_layers = cfg.variant == Variant::kTl ? cfg.FrozenLayers() : 0;
  model.train_accuracy = Accuracy(model.network, pair.target_train);
  model.eval_accuracy = Accuracy(model.network, pair.target_eval);
  std::shared_ptr<const Network> pretrained;
  if (cfg.attack.shadow) {
    pretrained = LoadSource(cfg, source_path.empty() ? out / "source.json" : fs::path(source_path));
  }
  RunOptions opts;
  opts.jobs = rc.jobs;
  const ExperimentReport report = EvaluateModel(cfg, pair, model, ProcedureFor(cfg, pretrained), opts);
  WriteSnapshot(rc, out);
  PersistReport(report, out, /*with_model=*/false);
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
  PrintReportLine(report);
  return 0;
}

void WritePlots(const std::vector<SummaryRow>& summary, const fs::path& dir) {
  const SweepPlots plots = PlotSummary(summary);
  WriteTextFile(dir / "asr_vs_m.svg", plots.asr_vs_m);
  WriteTextFile(dir / "acc_vs_m.svg", plots.acc_vs_m);
  WriteTextFile(dir / "asr_vs_sigma.svg", plots.asr_vs_sigma);
  WriteTextFile(dir / "bars.svg", plots.bars);
}

int SweepCmd(const CommonFlags& f) {
  const RunConfig rc = LoadConfig(f);
  const fs::path out = OutDir(f);
  WriteSnapshot(rc, out);
  RunOptions opts;
  opts.jobs = rc.jobs;
  opts.out_dir = out;
  const SweepResult result = RunSweep(rc, opts);
  const std::vector<ResultRow> rows = result.Rows();
  WriteTextFile(out / "results.csv", ResultsCsv(rows));
  std::string jsonl;
  for (const ExperimentReport& r : result.reports) jsonl += ReportToJson(r).dump() + "\n";
  WriteTextFile(out / "reports.jsonl", jsonl);
  std::error_code ec;
  fs::remove(out / "failures.csv", ec);
  if (!result.failures.empty()) {
    std::string text = "cell_id,message\n";
    for (const SweepFailure& fail : result.failures) {
      std::string msg = fail.message;
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ';';
      }
      text += std::to_string(fail.cell_id) + "," + msg + "\n";
      std::cerr << "cell " << fail.cell_id << " failed: " << fail.message << "\n";
    }
    WriteTextFile(out / "failures.csv", text);
  }
  const std::vector<SummaryRow> summary = Summarize(rows);
  const std::string table = SummaryTable(summary);
  WriteTextFile(out / "summary.txt", table);
  if (!summary.empty()) WritePlots(summary, out);
  std::cout << table;
  std::printf("%zu cells ok, %zu failed, %d source trainings -> %s\n", result.reports.size(),
              result.failures.size(), result.source_trainings, (out / "results.csv").string().c_str());
  return result.reports.empty() ? kExitRuntime : 0;
}

int ReportCmd(const std::string& results, const std::string& out_flag) {
  const std::vector<ResultRow> rows = ParseResultsCsv(ReadTextFile(results));
  if (rows.empty()) throw Error("no rows in " + results);
  const std::vector<SummaryRow> summary = Summarize(rows);
  const std::string table = SummaryTable(summary);
  const fs::path dir = out_flag.empty() ? fs::path(results).parent_path() : fs::path(out_flag);
  WriteTextFile(dir / "summary.txt", table);
  WritePlots(summary, dir);
  std::cout << table;
  return 0;
}

int PrintConfigCmd(const CommonFlags& f) {
  std::cout << RunConfigToText(LoadConfig(f));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference evaluation of transfer learning and smoothing defenses"};
  app.require_subcommand(1);

  CommonFlags train_flags, transfer_flags, attack_flags, sweep_flags, print_flags;
  std::string transfer_source, attack_model, attack_source, results_path, report_out;

  auto* train = app.add_subcommand("train-source", "pretrain the source network");
  AddCommon(train, train_flags, false);
  auto* transfer = app.add_subcommand("transfer", "train a target model");
  AddCommon(transfer, transfer_flags, true);
  transfer->add_option("--source", transfer_source, "source checkpoint (default <out>/source.json)");
  auto* attack = app.add_subcommand("attack", "attack a trained target model");
  AddCommon(attack, attack_flags, true);
  attack->add_option("--model", attack_model, "target checkpoint (default <out>/target.json)");
  attack->add_option("--source", attack_source, "source checkpoint for shadow training");
  auto* sweep = app.add_subcommand("sweep", "run the configured grid");
  AddCommon(sweep, sweep_flags, true);
  auto* report = app.add_subcommand("report", "summarize a results CSV");
  report->add_option("results", results_path, "results CSV")->required();
  report->add_option("--out", report_out, "directory for summary and plots");
  auto* print = app.add_subcommand("print-config", "print the effective config");
  AddCommon(print, print_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return TrainSourceCmd(train_flags);
    if (*transfer) return TransferCmd(transfer_flags, transfer_source);
    if (*attack) return AttackCmd(attack_flags, attack_model, attack_source);
    if (*sweep) return SweepCmd(sweep_flags);
    if (*report) return ReportCmd(results_path, report_out);
    if (*print) return PrintConfigCmd(print_flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
