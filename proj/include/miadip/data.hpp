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

// Synthetic source/target task pairs, membership bookkeeping and CSV I/O.

#ifndef MIADIP_DATA_HPP_
#define MIADIP_DATA_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "miadip/checkpoint.hpp"
#include "miadip/core.hpp"

namespace miadip {

struct SampleSet {
  Matrix features;  // N x d
  std::vector<int> labels;
  std::vector<std::uint8_t> membership;  // 1 = used to train the target model
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  bool empty() const { return labels.empty(); }

  void Validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size() ||
        membership.size() != labels.size()) {
      throw ShapeError("sample set has inconsistent row counts");
    }
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw ConfigError("label " + std::to_string(y) + " outside declared class count " +
                          std::to_string(num_classes));
      }
    }
  }

  SampleSet Subset(std::span<const std::size_t> indices) const {
    SampleSet out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
    out.labels.reserve(indices.size());
    out.membership.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) =
          features.row(static_cast<Eigen::Index>(indices[i]));
      out.labels.push_back(labels[indices[i]]);
      out.membership.push_back(membership[indices[i]]);
    }
    return out;
  }

  SampleSet Head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return Subset(idx);
  }

  SampleSet WithMembership(std::uint8_t flag) const {
    SampleSet out = *this;
    std::fill(out.membership.begin(), out.membership.end(), flag);
    return out;
  }

  std::vector<std::size_t> ClassCounts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  bool operator==(const SampleSet&) const = default;
};

// Mean over features of the per-feature standard deviation.
inline double MeanFeatureStd(const SampleSet& set) {
  if (set.size() < 2) return 1.0;
  const Matrix& x = set.features;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var =
      (x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows() - 1);
  return var.array().sqrt().mean();
}

struct TaskPairConfig {
  int dim = 128;
  int source_classes = 20;
  int target_classes = 5;
  double overlap = 1.0;  // fraction of target directions shared with the source
  int source_n = 20000;
  int target_train_n = 64;
  int target_eval_n = 1000;
  double class_separation = 3.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  int shared_directions() const {
    return static_cast<int>(std::lround(overlap * static_cast<double>(target_classes)));
  }

  void Validate() const {
    if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("overlap must lie in [0, 1]");
    if (dim <= 0 || source_classes <= 0 || target_classes <= 0) {
      throw ConfigError("dim and class counts must be positive");
    }
    if (target_train_n < target_classes) {
      throw ConfigError("target_train_n must be at least target_classes");
    }
    if (source_n < 0 || target_eval_n < 0) throw ConfigError("sample counts must be >= 0");
    if (shared_directions() > source_classes) {
      throw ConfigError("overlap asks for more shared directions than source classes");
    }
    const int needed = source_classes + (target_classes - shared_directions());
    if (dim < needed) {
      throw ConfigError("dim " + std::to_string(dim) + " too small to host " +
                        std::to_string(needed) + " orthogonal class directions");
    }
    if (!(noise_std >= 0.0) || !(class_separation > 0.0)) {
      throw ConfigError("noise_std must be >= 0 and class_separation > 0");
    }
  }
};

// Rows are orthonormal class directions scaled by class_separation.
struct TaskPair {
  Matrix source_prototypes;  // C_s x d
  Matrix target_prototypes;  // C_t x d
  SampleSet source;
  SampleSet target_train;
  SampleSet target_eval;
};

// Modified Gram-Schmidt with a second reorthogonalization pass.
inline Matrix OrthonormalRows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < i; ++j) m.row(i) -= m.row(i).dot(m.row(j)) * m.row(j);
    }
    const double n = m.row(i).norm();
    if (n < 1e-12) throw NumericError("degenerate direction during Gram-Schmidt");
    m.row(i) /= n;
  }
  return m;
}

namespace internal {

inline SampleSet DrawBlobs(const Matrix& prototypes, double noise_std, int n,
                           std::uint8_t membership, Rng& rng) {
  SampleSet set;
  const auto classes = static_cast<int>(prototypes.rows());
  set.num_classes = classes;
  set.features.resize(n, prototypes.cols());
  set.labels.resize(static_cast<std::size_t>(n));
  set.membership.assign(static_cast<std::size_t>(n), membership);
  for (int i = 0; i < n; ++i) set.labels[i] = i % classes;
  std::shuffle(set.labels.begin(), set.labels.end(), rng);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < prototypes.cols(); ++c) {
      set.features(i, c) = prototypes(set.labels[i], c) + noise_std * StandardNormal(rng);
    }
  }
  return set;
}

}  // namespace internal

// Fresh i.i.d. draws from the target class-conditionals on an independent
// stream; used for adversary (shadow) pools.
inline SampleSet DrawTargetSamples(const TaskPairConfig& cfg, const Matrix& target_prototypes,
                                   int n, std::string_view stream, std::uint8_t membership) {
  Rng rng = MakeRng(cfg.seed, {TagOf("target-stream"), TagOf(stream)});
  return internal::DrawBlobs(target_prototypes, cfg.noise_std, n, membership, rng);
}

inline TaskPair GenTaskPair(const TaskPairConfig& cfg) {
  cfg.Validate();
  const int shared = cfg.shared_directions();
  const int fresh = cfg.target_classes - shared;
  Rng proto_rng = MakeRng(cfg.seed, {TagOf("prototypes")});
  Matrix basis = OrthonormalRows(GaussianMatrix(cfg.source_classes + fresh, cfg.dim, 1.0,
                                                proto_rng));
  std::vector<int> order(static_cast<std::size_t>(cfg.source_classes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), proto_rng);

  TaskPair pair;
  pair.source_prototypes = cfg.class_separation * basis.topRows(cfg.source_classes);
  pair.target_prototypes.resize(cfg.target_classes, cfg.dim);
  for (int j = 0; j < cfg.target_classes; ++j) {
    pair.target_prototypes.row(j) =
        j < shared ? pair.source_prototypes.row(order[j])
                   : Eigen::RowVectorXd(cfg.class_separation *
                                        basis.row(cfg.source_classes + (j - shared)));
  }

  Rng source_rng = MakeRng(cfg.seed, {TagOf("source")});
  pair.source = internal::DrawBlobs(pair.source_prototypes, cfg.noise_std, cfg.source_n, 1,
                                    source_rng);
  pair.target_train =
      DrawTargetSamples(cfg, pair.target_prototypes, cfg.target_train_n, "train", 1);
  pair.target_eval =
      DrawTargetSamples(cfg, pair.target_prototypes, cfg.target_eval_n, "eval", 0);
  return pair;
}

// Cosines of the principal angles between the row spaces of a and b,
// in descending order.
inline Vector PrincipalCosines(const Matrix& a, const Matrix& b) {
  const Matrix qa = OrthonormalRows(a);
  const Matrix qb = OrthonormalRows(b);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa * qb.transpose());
  return svd.singularValues().cwiseMin(1.0);
}

// Mean principal-angle cosine between target and source class subspaces.
inline double SubspaceOverlap(const TaskPair& pair) {
  const Vector c = PrincipalCosines(pair.target_prototypes, pair.source_prototypes);
  const auto k = std::min(pair.target_prototypes.rows(), pair.source_prototypes.rows());
  return c.head(k).sum() / static_cast<double>(pair.target_prototypes.rows());
}

struct MembershipSplit {
  SampleSet members;
  SampleSet nonmembers;
};

// Class-stratified split; members are flagged 1 and nonmembers 0. Both
// outputs keep the pool's row order.
inline MembershipSplit SplitMembership(const SampleSet& pool, std::size_t n_members,
                                       std::uint64_t seed) {
  pool.Validate();
  if (n_members > pool.size()) {
    throw ConfigError("split: asked for " + std::to_string(n_members) + " members from " +
                      std::to_string(pool.size()) + " samples");
  }
  const std::vector<std::size_t> counts = pool.ClassCounts();
  const auto present = static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  if (n_members > 0 && n_members < present) {
    throw ConfigError("split: " + std::to_string(n_members) +
                      " members cannot cover all " + std::to_string(present) + " classes");
  }

  // Largest-remainder allocation of member quotas per class.
  std::vector<std::size_t> quota(counts.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = static_cast<double>(n_members) * static_cast<double>(counts[c]) /
                         static_cast<double>(pool.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < n_members; ++i) {
    const std::size_t c = remainders[i % remainders.size()].second;
    if (quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (n_members > 0 && counts[c] > 0 && quota[c] == 0) {
      throw ConfigError("split: too few samples to give class " + std::to_string(c) +
                        " a member");
    }
  }

  Rng rng = MakeRng(seed, {TagOf("split")});
  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
  }
  std::vector<std::uint8_t> is_member(pool.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (std::size_t k = 0; k < quota[c]; ++k) is_member[by_class[c][k]] = 1;
  }
  std::vector<std::size_t> member_idx;
  std::vector<std::size_t> nonmember_idx;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (is_member[i] ? member_idx : nonmember_idx).push_back(i);
  }
  return {pool.Subset(member_idx).WithMembership(1),
          pool.Subset(nonmember_idx).WithMembership(0)};
}

inline std::string FormatDouble(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

inline bool ParseDouble(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline bool ParseInt(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline std::vector<std::string_view> SplitCsvLine(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

// Schema: f0,...,f{d-1},label,member with LF line endings.
inline std::string SampleSetToCsv(const SampleSet& set) {
  std::string out;
  for (int c = 0; c < set.dim(); ++c) out += "f" + std::to_string(c) + ",";
  out += "label,member\n";
  for (std::size_t r = 0; r < set.size(); ++r) {
    for (int c = 0; c < set.dim(); ++c) {
      out += FormatDouble(set.features(static_cast<Eigen::Index>(r), c));
      out += ',';
    }
    out += std::to_string(set.labels[r]) + "," + std::to_string(set.membership[r]) + "\n";
  }
  return out;
}

// Parses the CSV schema above; the member column is optional and defaults
// to 0. num_classes is max(label) + 1 unless a larger count is supplied.
inline SampleSet SampleSetFromCsv(const std::string& text, int declared_classes = 0) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw ParseError("missing header row", 1);
  const std::vector<std::string_view> header = SplitCsvLine(line);
  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  if (d == header.size() || header[d] != "label") {
    throw ParseError("header must be f0,...,f{d-1},label[,member]", line_no);
  }
  const bool has_member = header.size() == d + 2;
  if (header.size() > d + 2 || (has_member && header[d + 1] != "member")) {
    throw ParseError("unexpected header column after label", line_no);
  }
  const std::size_t width = header.size();

  std::vector<double> values;
  SampleSet set;
  while (next_line()) {
    if (line.empty()) continue;
    const std::vector<std::string_view> cells = SplitCsvLine(line);
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      if (!ParseDouble(cells[c], v) || !std::isfinite(v)) {
        throw ParseError("non-numeric feature '" + std::string(cells[c]) + "' in column f" +
                             std::to_string(c),
                         line_no);
      }
      values.push_back(v);
    }
    long long label = 0;
    if (!ParseInt(cells[d], label) || label < 0) {
      throw ParseError("invalid label '" + std::string(cells[d]) + "'", line_no);
    }
    set.labels.push_back(static_cast<int>(label));
    long long member = 0;
    if (has_member && (!ParseInt(cells[d + 1], member) || (member != 0 && member != 1))) {
      throw ParseError("member flag must be 0 or 1", line_no);
    }
    set.membership.push_back(static_cast<std::uint8_t>(member));
  }
  set.features = Eigen::Map<const Matrix>(values.data(),
                                          static_cast<Eigen::Index>(set.labels.size()),
                                          static_cast<Eigen::Index>(d));
  int max_label = -1;
  for (int y : set.labels) max_label = std::max(max_label, y);
  set.num_classes = std::max(declared_classes, max_label + 1);
  return set;
}

inline void SaveCsv(const SampleSet& set, const std::filesystem::path& path) {
  WriteTextFile(path, SampleSetToCsv(set));
}

inline SampleSet LoadCsv(const std::filesystem::path& path, int declared_classes = 0) {
  return SampleSetFromCsv(ReadTextFile(path), declared_classes);
}

}  // namespace miadip

#endif  // MIADIP_DATA_HPP_
