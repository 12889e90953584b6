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

// Run configuration: the experiment description, sweep grid and its
// TOML-style text form.
//
// The text form is sectioned `key = value` lines. Lists are written as
// `[a, b, c]`, strings may be quoted. Every key has a default, and
// RunConfigToText() prints all of them, so a printed config parses back to
// an identical RunConfig.

#ifndef MIADIP_CONFIG_HPP_
#define MIADIP_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "miadip/attack.hpp"
#include "miadip/core.hpp"
#include "miadip/data.hpp"
#include "miadip/smooth.hpp"
#include "miadip/train.hpp"

namespace miadip {

enum class ThresholdMode { kBest, kShadow };

// sigma is in units of the mean per-feature training std; 0 disables
// smoothing unless tune is set, in which case sigma is chosen from candidates.
struct SmoothingSettings {
  double sigma = 0.0;
  bool tune = false;
  std::vector<double> candidates = {0.0, 0.05, 0.1, 0.2, 0.4};
  int num_samples = 32;
  Aggregation aggregation = Aggregation::kSoftAverage;
  NoiseMode noise_mode = NoiseMode::kPerSample;
  double acc_tolerance = kDefaultAccuracyTolerance;
};

// Per-sample HSJ budget used by experiments: smaller than the library
// default so a smoothed sweep stays within minutes on one core.
inline AttackBudget ExperimentBudget() {
  AttackBudget b;
  b.hsj.grad_probes = 32;
  b.hsj.max_rounds = 8;
  b.hsj.max_queries = 1000;
  return b;
}

struct AttackSettings {
  bool bim = true;
  bool hsj = true;
  bool entropy = true;
  int eval_members = 128;  // members and nonmembers attacked per run, each
  bool shadow = false;     // also calibrate thresholds on a shadow model
  ThresholdMode threshold = ThresholdMode::kBest;
  AttackBudget budget = ExperimentBudget();
};

struct ExperimentConfig {
  TaskPairConfig task;
  std::vector<int> hidden = {64, 32};
  SourceTrainConfig source;
  TransferConfig transfer;
  Variant variant = Variant::kTl;
  double m_frac = 1.0;
  double lambda = 0.001;
  double dp_clip = 1.0;
  double dp_noise = 1.0;
  int selena_parts = 4;
  SmoothingSettings smoothing;
  AttackSettings attack;
  std::uint64_t seed = 0;

  Architecture arch() const {
    return Architecture{task.dim, hidden, task.target_classes};
  }

  // Dense layers frozen for a given fraction of the non-head layers.
  int FrozenLayers() const {
    const int k = static_cast<int>(hidden.size()) + 1;
    return static_cast<int>(std::lround(m_frac * static_cast<double>(k - 1)));
  }

  void Validate() const {
    task.Validate();
    transfer.Validate();
    attack.budget.Validate();
    if (hidden.empty()) throw ConfigError("model.hidden needs at least one hidden layer");
    for (int w : hidden) {
      if (w <= 0) throw ConfigError("model.hidden widths must be positive");
    }
    if (!(m_frac >= 0.0 && m_frac <= 1.0)) throw ConfigError("transfer.m_frac must be in [0,1]");
    if (attack.eval_members <= 0) throw ConfigError("attack.eval_members must be positive");
    if (attack.threshold == ThresholdMode::kShadow && !attack.shadow) {
      throw ConfigError("attack.threshold = shadow requires attack.shadow = true");
    }
    if (smoothing.num_samples < 1) throw ConfigError("smoothing.num_samples must be >= 1");
    if (smoothing.tune && smoothing.candidates.empty()) {
      throw ConfigError("smoothing.candidates must be nonempty when tuning");
    }
    if (source.epochs < 0 || !(source.lr > 0.0) || source.batch_size <= 0) {
      throw ConfigError("invalid [source] settings");
    }
    if (selena_parts < 2) throw ConfigError("transfer.selena_parts must be >= 2");
    if (!(dp_clip > 0.0) || !(dp_noise >= 0.0)) {
      throw ConfigError("transfer.dp_clip must be > 0 and dp_noise >= 0");
    }
  }
};

struct SweepGrid {
  std::vector<Variant> variants = {Variant::kNtl, Variant::kTl};
  std::vector<double> m_fracs = {0.0, 0.5, 1.0};
  std::vector<int> n_sizes = {64};
  std::vector<double> sigmas = {0.0};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
};

struct RunConfig {
  ExperimentConfig experiment;
  SweepGrid sweep;
  int jobs = 1;
};

namespace config_internal {

inline std::string Trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::string Unquote(std::string s) {
  s = Trim(std::move(s));
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline std::vector<std::string> ListItems(const std::string& raw) {
  std::string s = Trim(raw);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> items;
  if (Trim(s).empty()) return items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(Unquote(item));
  return items;
}

template <class T>
T ParseScalar(const std::string& raw);

template <>
inline double ParseScalar<double>(const std::string& raw) {
  double v = 0.0;
  if (!ParseDouble(Unquote(raw), v)) throw ConfigError("expected a number, got '" + raw + "'");
  return v;
}

template <>
inline int ParseScalar<int>(const std::string& raw) {
  long long v = 0;
  if (!ParseInt(Unquote(raw), v)) throw ConfigError("expected an integer, got '" + raw + "'");
  return static_cast<int>(v);
}

template <>
inline std::int64_t ParseScalar<std::int64_t>(const std::string& raw) {
  long long v = 0;
  if (!ParseInt(Unquote(raw), v)) throw ConfigError("expected an integer, got '" + raw + "'");
  return v;
}

template <>
inline std::uint64_t ParseScalar<std::uint64_t>(const std::string& raw) {
  const std::string s = Unquote(raw);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + raw + "'");
  }
  return v;
}

template <>
inline bool ParseScalar<bool>(const std::string& raw) {
  const std::string s = Unquote(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + raw + "'");
}

template <>
inline std::string ParseScalar<std::string>(const std::string& raw) {
  return Unquote(raw);
}

template <>
inline Variant ParseScalar<Variant>(const std::string& raw) {
  return ParseVariant(Unquote(raw));
}

template <>
inline Aggregation ParseScalar<Aggregation>(const std::string& raw) {
  const std::string s = Unquote(raw);
  if (s == "soft") return Aggregation::kSoftAverage;
  if (s == "vote") return Aggregation::kMajorityVote;
  throw ConfigError("aggregation must be soft or vote, got '" + s + "'");
}

template <>
inline NoiseMode ParseScalar<NoiseMode>(const std::string& raw) {
  const std::string s = Unquote(raw);
  if (s == "per_sample") return NoiseMode::kPerSample;
  if (s == "fresh") return NoiseMode::kFresh;
  throw ConfigError("noise_mode must be per_sample or fresh, got '" + s + "'");
}

template <>
inline ThresholdMode ParseScalar<ThresholdMode>(const std::string& raw) {
  const std::string s = Unquote(raw);
  if (s == "best") return ThresholdMode::kBest;
  if (s == "shadow") return ThresholdMode::kShadow;
  throw ConfigError("threshold must be best or shadow, got '" + s + "'");
}

inline std::string Format(double v) { return FormatDouble(v); }
inline std::string Format(int v) { return std::to_string(v); }
inline std::string Format(std::int64_t v) { return std::to_string(v); }
inline std::string Format(std::uint64_t v) { return std::to_string(v); }
inline std::string Format(bool v) { return v ? "true" : "false"; }
inline std::string Format(const std::string& v) { return "\"" + v + "\""; }
inline std::string Format(Variant v) { return Format(std::string(VariantName(v))); }
inline std::string Format(Aggregation a) {
  return Format(std::string(a == Aggregation::kSoftAverage ? "soft" : "vote"));
}
inline std::string Format(NoiseMode m) {
  return Format(std::string(m == NoiseMode::kPerSample ? "per_sample" : "fresh"));
}
inline std::string Format(ThresholdMode m) {
  return Format(std::string(m == ThresholdMode::kBest ? "best" : "shadow"));
}

template <class T>
std::string Format(const std::vector<T>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += Format(items[i]);
  }
  return out + "]";
}

template <class T>
struct Parser {
  static T Parse(const std::string& raw) { return ParseScalar<T>(raw); }
};

template <class T>
struct Parser<std::vector<T>> {
  static std::vector<T> Parse(const std::string& raw) {
    std::vector<T> out;
    for (const std::string& item : ListItems(raw)) out.push_back(ParseScalar<T>(item));
    return out;
  }
};

struct KeySpec {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;

  std::string name() const { return section + "." + key; }
};

template <class Access>
KeySpec Key(std::string section, std::string key, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  return KeySpec{std::move(section), std::move(key),
                 [access](RunConfig& c, const std::string& raw) {
                   access(c) = Parser<T>::Parse(raw);
                 },
                 [access](const RunConfig& c) {
                   return Format(access(const_cast<RunConfig&>(c)));
                 }};
}

inline const std::vector<KeySpec>& Keys() {
  static const std::vector<KeySpec> keys = {
      Key("task", "dim", [](RunConfig& c) -> auto& { return c.experiment.task.dim; }),
      Key("task", "source_classes",
          [](RunConfig& c) -> auto& { return c.experiment.task.source_classes; }),
      Key("task", "target_classes",
          [](RunConfig& c) -> auto& { return c.experiment.task.target_classes; }),
      Key("task", "overlap", [](RunConfig& c) -> auto& { return c.experiment.task.overlap; }),
      Key("task", "source_n", [](RunConfig& c) -> auto& { return c.experiment.task.source_n; }),
      Key("task", "target_train_n",
          [](RunConfig& c) -> auto& { return c.experiment.task.target_train_n; }),
      Key("task", "target_eval_n",
          [](RunConfig& c) -> auto& { return c.experiment.task.target_eval_n; }),
      Key("task", "class_separation",
          [](RunConfig& c) -> auto& { return c.experiment.task.class_separation; }),
      Key("task", "noise_std", [](RunConfig& c) -> auto& { return c.experiment.task.noise_std; }),
      Key("model", "hidden", [](RunConfig& c) -> auto& { return c.experiment.hidden; }),
      Key("source", "epochs", [](RunConfig& c) -> auto& { return c.experiment.source.epochs; }),
      Key("source", "lr", [](RunConfig& c) -> auto& { return c.experiment.source.lr; }),
      Key("source", "batch_size",
          [](RunConfig& c) -> auto& { return c.experiment.source.batch_size; }),
      Key("transfer", "variant", [](RunConfig& c) -> auto& { return c.experiment.variant; }),
      Key("transfer", "m_frac", [](RunConfig& c) -> auto& { return c.experiment.m_frac; }),
      Key("transfer", "epochs",
          [](RunConfig& c) -> auto& { return c.experiment.transfer.epochs; }),
      Key("transfer", "lr", [](RunConfig& c) -> auto& { return c.experiment.transfer.lr; }),
      Key("transfer", "batch_size",
          [](RunConfig& c) -> auto& { return c.experiment.transfer.batch_size; }),
      Key("transfer", "head_replace",
          [](RunConfig& c) -> auto& { return c.experiment.transfer.head_replace; }),
      Key("transfer", "lambda", [](RunConfig& c) -> auto& { return c.experiment.lambda; }),
      Key("transfer", "dp_clip", [](RunConfig& c) -> auto& { return c.experiment.dp_clip; }),
      Key("transfer", "dp_noise", [](RunConfig& c) -> auto& { return c.experiment.dp_noise; }),
      Key("transfer", "selena_parts",
          [](RunConfig& c) -> auto& { return c.experiment.selena_parts; }),
      Key("smoothing", "sigma", [](RunConfig& c) -> auto& { return c.experiment.smoothing.sigma; }),
      Key("smoothing", "tune", [](RunConfig& c) -> auto& { return c.experiment.smoothing.tune; }),
      Key("smoothing", "candidates",
          [](RunConfig& c) -> auto& { return c.experiment.smoothing.candidates; }),
      Key("smoothing", "num_samples",
          [](RunConfig& c) -> auto& { return c.experiment.smoothing.num_samples; }),
      Key("smoothing", "aggregation",
          [](RunConfig& c) -> auto& { return c.experiment.smoothing.aggregation; }),
      Key("smoothing", "noise_mode",
          [](RunConfig& c) -> auto& { return c.experiment.smoothing.noise_mode; }),
      Key("smoothing", "acc_tolerance",
          [](RunConfig& c) -> auto& { return c.experiment.smoothing.acc_tolerance; }),
      Key("attack", "bim", [](RunConfig& c) -> auto& { return c.experiment.attack.bim; }),
      Key("attack", "hsj", [](RunConfig& c) -> auto& { return c.experiment.attack.hsj; }),
      Key("attack", "entropy", [](RunConfig& c) -> auto& { return c.experiment.attack.entropy; }),
      Key("attack", "eval_members",
          [](RunConfig& c) -> auto& { return c.experiment.attack.eval_members; }),
      Key("attack", "shadow", [](RunConfig& c) -> auto& { return c.experiment.attack.shadow; }),
      Key("attack", "threshold",
          [](RunConfig& c) -> auto& { return c.experiment.attack.threshold; }),
      Key("attack", "bim_alpha",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.bim.alpha; }),
      Key("attack", "bim_max_iters",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.bim.max_iters; }),
      Key("attack", "hsj_init_trials",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.hsj.init_trials; }),
      Key("attack", "hsj_bsearch_tol",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.hsj.bsearch_tol; }),
      Key("attack", "hsj_grad_probes",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.hsj.grad_probes; }),
      Key("attack", "hsj_max_rounds",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.hsj.max_rounds; }),
      Key("attack", "hsj_max_queries",
          [](RunConfig& c) -> auto& { return c.experiment.attack.budget.hsj.max_queries; }),
      Key("sweep", "variants", [](RunConfig& c) -> auto& { return c.sweep.variants; }),
      Key("sweep", "m_fracs", [](RunConfig& c) -> auto& { return c.sweep.m_fracs; }),
      Key("sweep", "n_sizes", [](RunConfig& c) -> auto& { return c.sweep.n_sizes; }),
      Key("sweep", "sigmas", [](RunConfig& c) -> auto& { return c.sweep.sigmas; }),
      Key("sweep", "seeds", [](RunConfig& c) -> auto& { return c.sweep.seeds; }),
      Key("run", "seed", [](RunConfig& c) -> auto& { return c.experiment.seed; }),
      Key("run", "jobs", [](RunConfig& c) -> auto& { return c.jobs; }),
  };
  return keys;
}

inline std::size_t EditDistance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace config_internal

// Closest known "section.key" name, for error messages.
inline std::string NearestConfigKey(const std::string& name) {
  std::string best;
  std::size_t best_distance = std::string::npos;
  for (const auto& spec : config_internal::Keys()) {
    const std::size_t d = config_internal::EditDistance(name, spec.name());
    if (d < best_distance) {
      best_distance = d;
      best = spec.name();
    }
  }
  return best;
}

inline RunConfig ParseRunConfig(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " +
                      e.message());
  }
  RunConfig cfg;
  const auto& keys = config_internal::Keys();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must live inside a [section]; did you mean '" +
                        NearestConfigKey(section) + "'?");
    }
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      auto it = std::find_if(keys.begin(), keys.end(),
                             [&](const auto& spec) { return spec.name() == name; });
      if (it == keys.end()) {
        throw ConfigError("unknown config key '" + name + "'; nearest valid name is '" +
                          NearestConfigKey(name) + "'");
      }
      try {
        it->set(cfg, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
      }
    }
  }
  cfg.experiment.Validate();
  if (cfg.jobs < 1) throw ConfigError("run.jobs must be >= 1");
  return cfg;
}

inline std::string RunConfigToText(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& spec : config_internal::Keys()) {
    if (spec.section != section) {
      if (!section.empty()) out += "\n";
      section = spec.section;
      out += "[" + section + "]\n";
    }
    out += spec.key + " = " + spec.get(cfg) + "\n";
  }
  return out;
}

inline RunConfig LoadRunConfig(const std::filesystem::path& path) {
  return ParseRunConfig(ReadTextFile(path));
}

}  // namespace miadip

#endif  // MIADIP_CONFIG_HPP_
