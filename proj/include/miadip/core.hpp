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

// Shared numeric types, error hierarchy and seeded random streams.

#ifndef MIADIP_CORE_HPP_
#define MIADIP_CORE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace miadip {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a computation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : Error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what),
        layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

// Invalid configuration or parameters supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Error raised inside an experiment stage, prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t master,
                                std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = MixSeed(master);
  for (std::uint64_t k : keys) h = MixSeed(h ^ MixSeed(k + 0x632be59bd9b4e019ULL));
  return h;
}

// Stable 64-bit tag for a string key (FNV-1a).
inline std::uint64_t TagOf(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng MakeRng(std::uint64_t master, std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(DeriveSeed(master, keys));
}

inline double StandardNormal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double Uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng);
}

inline Matrix GaussianMatrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * StandardNormal(rng);
  return m;
}

inline std::span<const double> RowSpan(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline Eigen::Map<const Vector> AsVector(std::span<const double> x) {
  return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

// Index of the largest entry; ties resolve to the lowest index.
template <class Derived>
int Argmax(const Eigen::DenseBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

template <class Derived>
bool AllFinite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

}  // namespace miadip

#endif  // MIADIP_CORE_HPP_
