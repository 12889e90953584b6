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

// JSON checkpoint container for Network values.
//
//   {"format_version": 1,
//    "layers": [{"rows": R, "cols": C, "activation": "relu"|"identity",
//                "trainable": bool, "weights": [R*C row-major], "biases": [R]}]}
//
// Doubles are written in shortest round-trip form, so finite values survive a
// save/load cycle bit-exactly.

#ifndef MIADIP_CHECKPOINT_HPP_
#define MIADIP_CHECKPOINT_HPP_

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "miadip/core.hpp"
#include "miadip/network.hpp"

namespace miadip {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json NetworkToJson(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : net.layers) {
    if (!AllFinite(l.weights) || !AllFinite(l.bias)) {
      throw NumericError("refusing to serialize non-finite parameters");
    }
    layers.push_back({
        {"rows", l.weights.rows()},
        {"cols", l.weights.cols()},
        {"activation", ActivationName(l.activation)},
        {"trainable", l.trainable},
        {"weights", std::vector<double>(l.weights.data(), l.weights.data() + l.weights.size())},
        {"biases", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())},
    });
  }
  return {{"format_version", kCheckpointFormatVersion}, {"layers", layers}};
}

inline Network NetworkFromJson(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ConfigError("unsupported checkpoint format_version " + std::to_string(version));
    }
    Network net;
    for (const auto& jl : j.at("layers")) {
      const auto rows = jl.at("rows").get<Eigen::Index>();
      const auto cols = jl.at("cols").get<Eigen::Index>();
      const auto weights = jl.at("weights").get<std::vector<double>>();
      const auto biases = jl.at("biases").get<std::vector<double>>();
      if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(weights.size()) != rows * cols ||
          static_cast<Eigen::Index>(biases.size()) != rows) {
        throw ShapeError("checkpoint layer " + std::to_string(net.layers.size()) +
                         " has inconsistent sizes");
      }
      DenseLayer layer;
      layer.weights = Eigen::Map<const Matrix>(weights.data(), rows, cols);
      layer.bias = Eigen::Map<const Vector>(biases.data(), rows);
      layer.activation = ParseActivation(jl.at("activation").get<std::string>());
      layer.trainable = jl.at("trainable").get<bool>();
      net.layers.push_back(std::move(layer));
    }
    net.Validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void SaveCheckpoint(const Network& net, const std::filesystem::path& path) {
  WriteTextFile(path, NetworkToJson(net).dump(1) + "\n");
}

inline Network LoadCheckpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
  return NetworkFromJson(j);
}

}  // namespace miadip

#endif  // MIADIP_CHECKPOINT_HPP_
