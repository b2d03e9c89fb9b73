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

#include "sqakd/network.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "sqakd/ops.hpp"

namespace sqakd {

const char* ToString(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFlatten: return "flatten";
  }
  return "?";
}

LayerKind ParseLayerKind(const std::string& name) {
  if (name == "dense") return LayerKind::kDense;
  if (name == "conv2d") return LayerKind::kConv2d;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "flatten") return LayerKind::kFlatten;
  throw ConfigError("unknown layer kind '" + name + "'");
}

namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for both weights and biases.
void InitParametric(Layer& layer, std::mt19937_64& rng) {
  Shape wshape;
  std::size_t fan_in;
  if (layer.kind == LayerKind::kDense) {
    wshape = {layer.in, layer.out};
    fan_in = layer.in;
  } else {
    wshape = {layer.out, layer.in, layer.kernel, layer.kernel};
    fan_in = layer.in * layer.kernel * layer.kernel;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> w(NumElements(wshape)), b(layer.out);
  for (auto& v : w) v = static_cast<float>(dist(rng));
  for (auto& v : b) v = static_cast<float>(dist(rng));
  layer.weight = Tensor<float>(std::move(wshape), std::move(w), true);
  layer.bias = Tensor<float>({layer.out}, std::move(b), true);
}

Layer Dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Layer layer;
  layer.kind = LayerKind::kDense;
  layer.in = in;
  layer.out = out;
  InitParametric(layer, rng);
  return layer;
}

Layer Conv(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  Layer layer;
  layer.kind = LayerKind::kConv2d;
  layer.in = in;
  layer.out = out;
  layer.kernel = 3;
  layer.stride = 1;
  layer.padding = 1;
  InitParametric(layer, rng);
  return layer;
}

Layer Simple(LayerKind kind) {
  Layer layer;
  layer.kind = kind;
  return layer;
}

void MarkQuantizable(std::vector<Layer>& layers) {
  std::vector<std::size_t> parametric;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].parametric()) parametric.push_back(i);
  }
  for (std::size_t k = 0; k < parametric.size(); ++k) {
    layers[parametric[k]].quantizable = k != 0 && k + 1 != parametric.size();
  }
}

Tensor<float> CopyTensor(const Tensor<float>& t) {
  return t.defined() ? t.Clone() : Tensor<float>();
}

QuantizerSpec<float> CloneSpec(const QuantizerSpec<float>& spec) {
  QuantizerSpec<float> copy = spec;
  for (auto& p : copy.params) p = p.Clone();
  return copy;
}

void HashBytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
}

}  // namespace

Network Network::Mlp(std::size_t in, std::size_t hidden, std::size_t classes,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net;
  net.layers_.push_back(Dense(in, hidden, rng));
  net.layers_.push_back(Simple(LayerKind::kRelu));
  net.layers_.push_back(Dense(hidden, hidden, rng));
  net.layers_.push_back(Simple(LayerKind::kRelu));
  net.layers_.push_back(Dense(hidden, classes, rng));
  MarkQuantizable(net.layers_);
  return net;
}

Network Network::Cnn(std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t classes,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net;
  net.layers_.push_back(Conv(channels, 8, rng));
  net.layers_.push_back(Simple(LayerKind::kRelu));
  net.layers_.push_back(Conv(8, 16, rng));
  net.layers_.push_back(Simple(LayerKind::kRelu));
  net.layers_.push_back(Simple(LayerKind::kFlatten));
  net.layers_.push_back(Dense(16 * height * width, classes, rng));
  MarkQuantizable(net.layers_);
  return net;
}

void Network::Quantize(const QuantizationPlan& plan) {
  std::size_t parametric = 0, count = 0;
  for (const auto& layer : layers_) count += layer.parametric();
  for (auto& layer : layers_) {
    if (!layer.parametric()) continue;
    const bool edge = parametric == 0 || parametric + 1 == count;
    ++parametric;
    layer.quantizable = plan.quantize_first_last || !edge;
    layer.weight_quantizer.reset();
    layer.activation_quantizer.reset();
    if (!layer.quantizable) continue;
    if (plan.weight_bits < 32) {
      layer.weight_quantizer = MakeQuantizer<float>(
          plan.kind, QuantTarget::kWeights, plan.weight_bits, plan.backward);
    }
    if (plan.activation_bits < 32) {
      layer.activation_quantizer = MakeQuantizer<float>(
          plan.kind, QuantTarget::kActivations, plan.activation_bits,
          plan.backward);
    }
  }
}

bool Network::has_quantizers() const {
  for (const auto& layer : layers_) {
    if (layer.weight_quantizer || layer.activation_quantizer) return true;
  }
  return false;
}

bool Network::quantizers_initialized() const {
  for (const auto& layer : layers_) {
    if (layer.weight_quantizer && !layer.weight_quantizer->initialized()) return false;
    if (layer.activation_quantizer && !layer.activation_quantizer->initialized()) return false;
  }
  return true;
}

Tensor<float> Network::Forward(const Tensor<float>& x, bool quantized) const {
  return const_cast<Network*>(this)->ForwardImpl(x, quantized, nullptr);
}

void Network::CalibrateQuantizers(const Tensor<float>& x,
                                  const QuantizerInit& init) {
  NoGradGuard<float> guard;
  ForwardImpl(x, true, &init);
}

// `calibrate` is the only path that mutates the network.
Tensor<float> Network::ForwardImpl(const Tensor<float>& x, bool quantized,
                                   const QuantizerInit* calibrate) {
  Tensor<float> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    switch (layer.kind) {
      case LayerKind::kRelu:
        h = ops::Relu(h);
        break;
      case LayerKind::kFlatten: {
        const std::size_t n = h.dim(0);
        h = ops::Reshape(h, {n, h.size() / n});
        break;
      }
      case LayerKind::kDense:
      case LayerKind::kConv2d: {
        Tensor<float> input = h;
        Tensor<float> weight = layer.weight;
        if (quantized && layer.activation_quantizer) {
          auto& q = *layer.activation_quantizer;
          if (calibrate && !q.initialized()) InitializeQuantizer<float>(q, input.data(), *calibrate);
          if (!q.initialized()) {
            throw ConfigError("activation quantizer of layer " + std::to_string(i) +
                              " used before calibration");
          }
          input = sqakd::Quantize(input, q);
        }
        if (quantized && layer.weight_quantizer && !layer.weights_materialized) {
          auto& q = *layer.weight_quantizer;
          if (calibrate && !q.initialized()) InitializeQuantizer<float>(q, weight.data(), *calibrate);
          if (!q.initialized()) {
            throw ConfigError("weight quantizer of layer " + std::to_string(i) +
                              " used before calibration");
          }
          weight = sqakd::Quantize(weight, q);
        }
        if (layer.kind == LayerKind::kDense) {
          if (input.rank() != 2 || input.dim(1) != layer.in) {
            throw DimensionError("dense layer " + std::to_string(i) + " expects [N," +
                                 std::to_string(layer.in) + "] input, got " +
                                 ShapeToString(input.shape()));
          }
          h = ops::Add(ops::MatMul(input, weight), layer.bias);
        } else {
          h = ops::Conv2d(input, weight, layer.bias, layer.stride, layer.padding);
        }
        break;
      }
    }
  }
  return h;
}

std::vector<Tensor<float>> Network::Parameters() const {
  std::vector<Tensor<float>> out;
  for (const auto& layer : layers_) {
    if (!layer.parametric()) continue;
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

std::vector<Tensor<float>> Network::QuantizerParameters() const {
  std::vector<Tensor<float>> out;
  for (const auto& layer : layers_) {
    for (const auto* q : {&layer.weight_quantizer, &layer.activation_quantizer}) {
      if (!*q || (layer.weights_materialized && q == &layer.weight_quantizer)) continue;
      for (const auto& p : (*q)->params) out.push_back(p);
    }
  }
  return out;
}

void Network::SetRequiresGrad(bool value) {
  for (auto& p : Parameters()) p.set_requires_grad(value);
  for (auto& p : QuantizerParameters()) p.set_requires_grad(value);
}

Network Network::Clone() const {
  Network copy;
  copy.layers_ = layers_;
  for (auto& layer : copy.layers_) {
    layer.weight = CopyTensor(layer.weight);
    layer.bias = CopyTensor(layer.bias);
    if (layer.weight_quantizer) layer.weight_quantizer = CloneSpec(*layer.weight_quantizer);
    if (layer.activation_quantizer) {
      layer.activation_quantizer = CloneSpec(*layer.activation_quantizer);
    }
  }
  return copy;
}

bool Network::SameTopology(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.kind != b.kind || a.in != b.in || a.out != b.out ||
        a.kernel != b.kernel || a.stride != b.stride || a.padding != b.padding) {
      return false;
    }
  }
  return true;
}

void Network::CopyWeightsFrom(const Network& other) {
  if (!SameTopology(other)) {
    throw ConfigError("teacher and student topologies differ");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& dst = layers_[i];
    const auto& src = other.layers_[i];
    if (!dst.parametric()) continue;
    auto w = src.weight.data();
    auto b = src.bias.data();
    std::copy(w.begin(), w.end(), dst.weight.mutable_data().begin());
    std::copy(b.begin(), b.end(), dst.bias.mutable_data().begin());
  }
}

std::uint64_t Network::ParameterHash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : Parameters()) {
    HashBytes(h, p.data().data(), p.size() * sizeof(float));
  }
  for (const auto& p : QuantizerParameters()) {
    HashBytes(h, p.data().data(), p.size() * sizeof(float));
  }
  return h;
}

Network Network::MaterializeQuantizedWeights() const {
  Network out = Clone();
  NoGradGuard<float> guard;
  for (auto& layer : out.layers_) {
    if (!layer.weight_quantizer || layer.weights_materialized) continue;
    const auto wq = sqakd::Quantize(layer.weight, *layer.weight_quantizer);
    layer.weight = Tensor<float>(wq.shape(),
                                 std::vector<float>(wq.data().begin(), wq.data().end()),
                                 true);
    layer.weights_materialized = true;
  }
  return out;
}

}  // namespace sqakd
