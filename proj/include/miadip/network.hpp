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

// Feed-forward dense networks with exact reverse-mode gradients.
//
// A Network is a value type: an ordered list of dense layers, each carrying
// its own trainable flag. Every function here is pure in its Network
// argument; training code mutates private copies.

#ifndef MIADIP_NETWORK_HPP_
#define MIADIP_NETWORK_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miadip/core.hpp"

namespace miadip {

enum class Activation { kRelu, kIdentity };

inline const char* ActivationName(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

inline Activation ParseActivation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::kRelu;
  bool trainable = true;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

struct Network {
  std::vector<DenseLayer> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  // Throws ShapeError unless layer dimensions chain and the last layer
  // emits raw logits.
  void Validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (int i = 0; i < num_layers(); ++i) {
      const DenseLayer& l = layers[i];
      if (l.weights.rows() == 0 || l.weights.cols() == 0) {
        throw ShapeError("layer " + std::to_string(i) + " has an empty weight matrix");
      }
      if (l.bias.size() != l.weights.rows()) {
        throw ShapeError("layer " + std::to_string(i) + " bias length " +
                         std::to_string(l.bias.size()) + " != rows " +
                         std::to_string(l.weights.rows()));
      }
      if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
        throw ShapeError("layer " + std::to_string(i) + " expects " +
                         std::to_string(l.in_dim()) + " inputs but layer " +
                         std::to_string(i - 1) + " emits " +
                         std::to_string(layers[i - 1].out_dim()));
      }
    }
    if (layers.back().activation != Activation::kIdentity) {
      throw ShapeError("final layer must use the identity activation");
    }
  }

  bool operator==(const Network& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const DenseLayer& a = layers[i];
      const DenseLayer& b = other.layers[i];
      if (a.activation != b.activation || a.trainable != b.trainable ||
          a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
          a.weights != b.weights || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }
};

// Bitwise comparison of one layer's parameters (distinguishes -0.0 and +0.0).
inline bool BitwiseEqual(const DenseLayer& a, const DenseLayer& b) {
  if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
      a.bias.size() != b.bias.size()) {
    return false;
  }
  return std::equal(a.weights.data(), a.weights.data() + a.weights.size(), b.weights.data(),
                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) ==
                                                    std::bit_cast<std::uint64_t>(y); }) &&
         std::equal(a.bias.data(), a.bias.data() + a.bias.size(), b.bias.data(),
                    [](double x, double y) { return std::bit_cast<std::uint64_t>(x) ==
                                                    std::bit_cast<std::uint64_t>(y); });
}

struct Architecture {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline DenseLayer MakeDenseLayer(int in_dim, int out_dim, Activation activation, Rng& rng) {
  if (in_dim <= 0 || out_dim <= 0) throw ShapeError("layer dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  DenseLayer layer;
  layer.weights.resize(out_dim, in_dim);
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
    layer.weights.data()[i] = Uniform(rng, -limit, limit);
  }
  layer.bias = Vector::Zero(out_dim);
  layer.activation = activation;
  return layer;
}

inline Network MakeNetwork(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim <= 0 || arch.output_dim <= 0) {
    throw ConfigError("architecture needs positive input and output dims");
  }
  Rng rng = MakeRng(seed, {TagOf("init")});
  Network net;
  int in = arch.input_dim;
  for (int width : arch.hidden) {
    net.layers.push_back(MakeDenseLayer(in, width, Activation::kRelu, rng));
    in = width;
  }
  net.layers.push_back(MakeDenseLayer(in, arch.output_dim, Activation::kIdentity, rng));
  return net;
}

namespace internal {

inline void ApplyActivation(Matrix& z, Activation a) {
  if (a == Activation::kRelu) z = z.cwiseMax(0.0);
}

inline Matrix Affine(const DenseLayer& layer, const Matrix& h) {
  Matrix z = h * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

inline void CheckBatch(const Network& net, const Matrix& batch) {
  if (net.layers.empty()) throw ShapeError("network has no layers");
  if (batch.cols() != net.input_dim()) {
    throw ShapeError("batch width " + std::to_string(batch.cols()) +
                     " != network input dim " + std::to_string(net.input_dim()));
  }
}

// Pre-activations of every layer plus the layer inputs, kept for backprop.
struct ForwardTrace {
  std::vector<Matrix> inputs;          // inputs[l] is the input to layer l
  std::vector<Matrix> preactivations;  // preactivations[l] = inputs[l] W^T + b
  Matrix logits;
};

inline ForwardTrace TracedForward(const Network& net, const Matrix& batch) {
  CheckBatch(net, batch);
  ForwardTrace trace;
  trace.inputs.reserve(net.layers.size());
  trace.preactivations.reserve(net.layers.size());
  Matrix h = batch;
  for (int l = 0; l < net.num_layers(); ++l) {
    const DenseLayer& layer = net.layers[l];
    Matrix z = Affine(layer, h);
    if (!AllFinite(z)) throw NumericError("non-finite activations", l);
    trace.inputs.push_back(std::move(h));
    h = z;
    ApplyActivation(h, layer.activation);
    trace.preactivations.push_back(std::move(z));
  }
  trace.logits = std::move(h);
  return trace;
}

// Pushes dL/dlogits back through the trace. Parameter gradients are filled
// only when weight_grads/bias_grads are non-null.
inline Matrix Backward(const Network& net, const ForwardTrace& trace, Matrix dlogits,
                       std::vector<Matrix>* weight_grads, std::vector<Vector>* bias_grads) {
  Matrix delta = std::move(dlogits);
  if (weight_grads) weight_grads->assign(net.layers.size(), Matrix());
  if (bias_grads) bias_grads->assign(net.layers.size(), Vector());
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const DenseLayer& layer = net.layers[l];
    if (layer.activation == Activation::kRelu) {
      delta = delta.cwiseProduct(
          (trace.preactivations[l].array() > 0.0).cast<double>().matrix());
    }
    if (weight_grads) (*weight_grads)[l] = delta.transpose() * trace.inputs[l];
    if (bias_grads) (*bias_grads)[l] = delta.colwise().sum().transpose();
    delta = delta * layer.weights;
  }
  return delta;
}

}  // namespace internal

inline Matrix Forward(const Network& net, const Matrix& batch) {
  internal::CheckBatch(net, batch);
  Matrix h = batch;
  for (const DenseLayer& layer : net.layers) {
    h = internal::Affine(layer, h);
    internal::ApplyActivation(h, layer.activation);
  }
  return h;
}

inline Vector Forward(const Network& net, std::span<const double> x) {
  Matrix batch = AsVector(x).transpose();
  return Forward(net, batch).row(0).transpose();
}

// Row-wise softmax with max subtraction.
inline Matrix Softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double m = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

inline Vector Softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

inline Matrix LogSoftmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

inline int PredictLabel(const Network& net, std::span<const double> x) {
  return Argmax(Forward(net, x));
}

inline std::vector<int> PredictLabels(const Network& net, const Matrix& batch) {
  const Matrix logits = Forward(net, batch);
  std::vector<int> labels(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) labels[r] = Argmax(logits.row(r));
  return labels;
}

struct Regularizer {
  enum class Kind { kNone, kL1, kL2 };
  Kind kind = Kind::kNone;
  double lambda = 0.0;

  static Regularizer None() { return {}; }
  static Regularizer L1(double lambda) { return {Kind::kL1, lambda}; }
  static Regularizer L2(double lambda) { return {Kind::kL2, lambda}; }
  bool active() const { return kind != Kind::kNone && lambda != 0.0; }
};

struct GradientBundle {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Matrix input_gradient;  // d(loss)/d(batch), same shape as the batch
  double loss = 0.0;

  // Squared L2 norm over the parameters of layers flagged trainable in net.
  double TrainableSquaredNorm(const Network& net) const {
    double sum = 0.0;
    for (int l = 0; l < net.num_layers(); ++l) {
      if (!net.layers[l].trainable) continue;
      sum += weight_grads[l].squaredNorm() + bias_grads[l].squaredNorm();
    }
    return sum;
  }
};

namespace internal {

inline void AddRegularization(const Network& net, const Regularizer& reg, GradientBundle& g) {
  if (!reg.active()) return;
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.layers[l].weights;
    if (reg.kind == Regularizer::Kind::kL1) {
      g.loss += reg.lambda * w.cwiseAbs().sum();
      g.weight_grads[l] += reg.lambda * w.unaryExpr([](double v) {
        return static_cast<double>((v > 0.0) - (v < 0.0));
      });
    } else {
      g.loss += reg.lambda * w.squaredNorm();
      g.weight_grads[l] += (2.0 * reg.lambda) * w;
    }
  }
}

inline void CheckLoss(const Network& net, double loss) {
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", net.num_layers() - 1);
}

}  // namespace internal

// Mean softmax cross-entropy against integer labels plus an optional weight
// penalty (biases are never penalized).
inline GradientBundle LossAndGrads(const Network& net, const Matrix& batch,
                                   std::span<const int> labels,
                                   const Regularizer& reg = Regularizer::None()) {
  if (batch.rows() == 0) throw ConfigError("empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != batch.rows()) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " != batch rows " +
                     std::to_string(batch.rows()));
  }
  internal::ForwardTrace trace = internal::TracedForward(net, batch);
  const Eigen::Index b = batch.rows();
  const int classes = net.output_dim();
  Matrix log_probs = LogSoftmax(trace.logits);
  GradientBundle g;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    if (labels[r] < 0 || labels[r] >= classes) {
      throw ConfigError("label " + std::to_string(labels[r]) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    loss -= log_probs(r, labels[r]);
  }
  g.loss = loss / static_cast<double>(b);
  internal::CheckLoss(net, g.loss);
  Matrix dlogits = log_probs.array().exp().matrix();
  for (Eigen::Index r = 0; r < b; ++r) dlogits(r, labels[r]) -= 1.0;
  dlogits /= static_cast<double>(b);
  g.input_gradient = internal::Backward(net, trace, std::move(dlogits), &g.weight_grads,
                                        &g.bias_grads);
  internal::AddRegularization(net, reg, g);
  return g;
}

// Mean cross-entropy against soft target distributions (one per row).
inline GradientBundle SoftTargetLossAndGrads(const Network& net, const Matrix& batch,
                                             const Matrix& targets,
                                             const Regularizer& reg = Regularizer::None()) {
  if (batch.rows() == 0) throw ConfigError("empty batch");
  if (targets.rows() != batch.rows() || targets.cols() != net.output_dim()) {
    throw ShapeError("soft targets must be batch rows x output dim");
  }
  internal::ForwardTrace trace = internal::TracedForward(net, batch);
  const double b = static_cast<double>(batch.rows());
  Matrix log_probs = LogSoftmax(trace.logits);
  GradientBundle g;
  g.loss = -(targets.cwiseProduct(log_probs)).sum() / b;
  internal::CheckLoss(net, g.loss);
  // d/dz of -sum_k t_k log p_k equals p - t when sum_k t_k = 1.
  Matrix dlogits = log_probs.array().exp().matrix();
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    dlogits.row(r) *= targets.row(r).sum();
  }
  dlogits = (dlogits - targets) / b;
  g.input_gradient = internal::Backward(net, trace, std::move(dlogits), &g.weight_grads,
                                        &g.bias_grads);
  internal::AddRegularization(net, reg, g);
  return g;
}

// d(sum over rows of <dlogits_r, logits_r>)/d(batch): a vector-Jacobian
// product through the network without parameter gradients.
inline Matrix InputVjp(const Network& net, const Matrix& batch, const Matrix& dlogits) {
  internal::ForwardTrace trace = internal::TracedForward(net, batch);
  if (dlogits.rows() != trace.logits.rows() || dlogits.cols() != trace.logits.cols()) {
    throw ShapeError("logit cotangent shape mismatch");
  }
  return internal::Backward(net, trace, dlogits, nullptr, nullptr);
}

// Gradient of the cross-entropy of one sample with respect to its features.
inline Vector InputLossGradient(const Network& net, std::span<const double> x, int label) {
  Matrix batch = AsVector(x).transpose();
  internal::ForwardTrace trace = internal::TracedForward(net, batch);
  Matrix dlogits = Softmax(trace.logits);
  dlogits(0, label) -= 1.0;
  return internal::Backward(net, trace, std::move(dlogits), nullptr, nullptr)
      .row(0)
      .transpose();
}

// w <- w - lr * g on trainable layers; frozen layers are left untouched.
inline void ApplySgd(Network& net, const GradientBundle& grads, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (grads.weight_grads.size() != net.layers.size() ||
      grads.bias_grads.size() != net.layers.size()) {
    throw ShapeError("gradient bundle does not match network depth");
  }
  if (lr == 0.0) return;
  for (int l = 0; l < net.num_layers(); ++l) {
    DenseLayer& layer = net.layers[l];
    if (!layer.trainable) continue;
    if (grads.weight_grads[l].rows() != layer.weights.rows() ||
        grads.weight_grads[l].cols() != layer.weights.cols() ||
        grads.bias_grads[l].size() != layer.bias.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    }
    layer.weights -= lr * grads.weight_grads[l];
    layer.bias -= lr * grads.bias_grads[l];
  }
}

inline Network SgdStep(Network net, const GradientBundle& grads, double lr) {
  ApplySgd(net, grads, lr);
  return net;
}

struct ClipStats {
  double max_raw_norm = 0.0;
  double max_clipped_norm = 0.0;
};

// DP-SGD style gradient: each per-sample gradient (over trainable layers) is
// rescaled to L2 norm <= clip, the rescaled gradients are averaged, and
// N(0, (noise_multiplier * clip / B)^2) noise is added to each trainable
// coordinate.
inline GradientBundle PerSampleClippedNoisyGrads(const Network& net, const Matrix& batch,
                                                 std::span<const int> labels, double clip,
                                                 double noise_multiplier, Rng& rng,
                                                 ClipStats* stats = nullptr) {
  if (batch.rows() == 0) throw ConfigError("per-sample clipping needs a nonempty batch");
  if (!(clip > 0.0)) throw ConfigError("clip bound must be positive");
  if (!(noise_multiplier >= 0.0)) throw ConfigError("noise multiplier must be >= 0");
  if (static_cast<Eigen::Index>(labels.size()) != batch.rows()) {
    throw ShapeError("label count does not match batch rows");
  }
  const Eigen::Index b = batch.rows();
  GradientBundle sum;
  sum.input_gradient = Matrix::Zero(b, batch.cols());
  ClipStats local;
  for (Eigen::Index r = 0; r < b; ++r) {
    Matrix row = batch.row(r);
    GradientBundle g = LossAndGrads(net, row, labels.subspan(r, 1));
    const double norm = std::sqrt(g.TrainableSquaredNorm(net));
    const double scale = norm > clip ? clip / norm : 1.0;
    local.max_raw_norm = std::max(local.max_raw_norm, norm);
    local.max_clipped_norm = std::max(local.max_clipped_norm, norm * scale);
    if (r == 0) {
      sum.weight_grads.resize(g.weight_grads.size());
      sum.bias_grads.resize(g.bias_grads.size());
      for (std::size_t l = 0; l < g.weight_grads.size(); ++l) {
        sum.weight_grads[l] = scale * g.weight_grads[l];
        sum.bias_grads[l] = scale * g.bias_grads[l];
      }
    } else {
      for (std::size_t l = 0; l < g.weight_grads.size(); ++l) {
        sum.weight_grads[l] += scale * g.weight_grads[l];
        sum.bias_grads[l] += scale * g.bias_grads[l];
      }
    }
    sum.input_gradient.row(r) = g.input_gradient.row(0) / static_cast<double>(b);
    sum.loss += g.loss;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  sum.loss *= inv_b;
  const double noise_std = noise_multiplier * clip * inv_b;
  for (int l = 0; l < net.num_layers(); ++l) {
    sum.weight_grads[l] *= inv_b;
    sum.bias_grads[l] *= inv_b;
    if (noise_std > 0.0 && net.layers[l].trainable) {
      for (Eigen::Index i = 0; i < sum.weight_grads[l].size(); ++i) {
        sum.weight_grads[l].data()[i] += noise_std * StandardNormal(rng);
      }
      for (Eigen::Index i = 0; i < sum.bias_grads[l].size(); ++i) {
        sum.bias_grads[l](i) += noise_std * StandardNormal(rng);
      }
    }
  }
  if (stats) *stats = local;
  return sum;
}

inline double WeightSquaredNorm(const Network& net) {
  double s = 0.0;
  for (const DenseLayer& l : net.layers) s += l.weights.squaredNorm();
  return s;
}

}  // namespace miadip

#endif  // MIADIP_NETWORK_HPP_
