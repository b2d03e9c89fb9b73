/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sqakd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace sqakd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void WriteBlob(const fs::path& path, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IOError("short write to " + path.string());
}

std::vector<float> ReadBlob(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot read blob " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != expected * 4) {
    throw IOError("blob " + path.string() + " holds " +
                  std::to_string(bytes.size()) + " bytes, manifest expects " +
                  std::to_string(expected * 4));
  }
  std::vector<float> values(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + b]} << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

json TensorEntry(const fs::path& dir, const std::string& name,
                 const Tensor<float>& t) {
  const std::string file = name + ".bin";
  WriteBlob(dir / file, t.data());
  return {{"name", name}, {"shape", t.shape()}, {"file", file}};
}

Tensor<float> LoadTensor(const fs::path& dir, const json& entry) {
  Shape shape = entry.at("shape").get<Shape>();
  auto values = ReadBlob(dir / entry.at("file").get<std::string>(), NumElements(shape));
  return Tensor<float>(std::move(shape), std::move(values), true);
}

json QuantizerEntry(const fs::path& dir, const std::string& prefix,
                    const QuantizerSpec<float>& spec) {
  if (spec.backward.kind == BackwardKind::kCustom) {
    throw ConfigError("custom backward rules cannot be serialized");
  }
  json params = json::array();
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    params.push_back(TensorEntry(dir, prefix + ".p" + std::to_string(i), spec.params[i]));
  }
  return {{"kind", ToString(spec.kind)},
          {"target", ToString(spec.target)},
          {"bits", spec.bits},
          {"backward", ToString(spec.backward.kind)},
          {"delta", spec.backward.delta},
          {"params", params}};
}

QuantizerSpec<float> LoadQuantizer(const fs::path& dir, const json& entry) {
  BackwardRule rule;
  rule.kind = ParseBackwardKind(entry.at("backward").get<std::string>());
  rule.delta = entry.at("delta").get<double>();
  auto spec = MakeQuantizer<float>(ParseQuantizerKind(entry.at("kind").get<std::string>()),
                                   ParseQuantTarget(entry.at("target").get<std::string>()),
                                   entry.at("bits").get<int>(), rule);
  for (const auto& p : entry.at("params")) spec.params.push_back(LoadTensor(dir, p));
  return spec;
}

}  // namespace

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& dir_name) {
  const fs::path dir(dir_name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create checkpoint directory " + dir_name + ": " + ec.message());

  json layers = json::array();
  const auto& net_layers = checkpoint.network.layers();
  for (std::size_t i = 0; i < net_layers.size(); ++i) {
    const Layer& layer = net_layers[i];
    const std::string prefix = "layer" + std::to_string(i);
    json entry = {{"kind", ToString(layer.kind)}};
    if (layer.parametric()) {
      entry["in"] = layer.in;
      entry["out"] = layer.out;
      entry["kernel"] = layer.kernel;
      entry["stride"] = layer.stride;
      entry["padding"] = layer.padding;
      entry["quantizable"] = layer.quantizable;
      entry["weights_materialized"] = layer.weights_materialized;
      entry["weight"] = TensorEntry(dir, prefix + ".weight", layer.weight);
      entry["bias"] = TensorEntry(dir, prefix + ".bias", layer.bias);
      if (layer.weight_quantizer) {
        entry["weight_quantizer"] = QuantizerEntry(dir, prefix + ".wq", *layer.weight_quantizer);
      }
      if (layer.activation_quantizer) {
        entry["activation_quantizer"] =
            QuantizerEntry(dir, prefix + ".aq", *layer.activation_quantizer);
      }
    }
    layers.push_back(std::move(entry));
  }
  const json manifest = {{"format_version", kCheckpointFormatVersion},
                         {"scalar", "float32"},
                         {"byte_order", "little"},
                         {"seed", checkpoint.seed},
                         {"layers", layers}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IOError("cannot write manifest in " + dir_name);
  out << manifest.dump(2) << "\n";
}

Checkpoint LoadCheckpoint(const std::string& dir_name) {
  const fs::path dir(dir_name);
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IOError("no checkpoint manifest at " + dir_name);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IOError("malformed checkpoint manifest in " + dir_name + ": " + e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw IOError("unsupported checkpoint format version in " + dir_name);
    }
    if (manifest.at("scalar").get<std::string>() != "float32") {
      throw IOError("unsupported checkpoint scalar type in " + dir_name);
    }
    Checkpoint ckpt;
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& entry : manifest.at("layers")) {
      Layer layer;
      layer.kind = ParseLayerKind(entry.at("kind").get<std::string>());
      if (layer.parametric()) {
        layer.in = entry.at("in").get<std::size_t>();
        layer.out = entry.at("out").get<std::size_t>();
        layer.kernel = entry.at("kernel").get<std::size_t>();
        layer.stride = entry.at("stride").get<std::size_t>();
        layer.padding = entry.at("padding").get<std::size_t>();
        layer.quantizable = entry.at("quantizable").get<bool>();
        layer.weights_materialized = entry.at("weights_materialized").get<bool>();
        layer.weight = LoadTensor(dir, entry.at("weight"));
        layer.bias = LoadTensor(dir, entry.at("bias"));
        const Shape expected_w = layer.kind == LayerKind::kDense
                                     ? Shape{layer.in, layer.out}
                                     : Shape{layer.out, layer.in, layer.kernel, layer.kernel};
        if (layer.weight.shape() != expected_w || layer.bias.shape() != Shape{layer.out}) {
          throw IOError("checkpoint topology disagrees with blob shapes in " + dir_name);
        }
        if (entry.contains("weight_quantizer")) {
          layer.weight_quantizer = LoadQuantizer(dir, entry.at("weight_quantizer"));
        }
        if (entry.contains("activation_quantizer")) {
          layer.activation_quantizer = LoadQuantizer(dir, entry.at("activation_quantizer"));
        }
      }
      ckpt.network.AddLayer(std::move(layer));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw IOError("malformed checkpoint manifest in " + dir_name + ": " + e.what());
  }
}

}  // namespace sqakd
