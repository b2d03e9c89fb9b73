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

#ifndef SQAKD_NETWORK_HPP_
#define SQAKD_NETWORK_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqakd/quantizer.hpp"
#include "sqakd/tensor.hpp"

namespace sqakd {

enum class LayerKind { kDense, kConv2d, kRelu, kFlatten };

const char* ToString(LayerKind kind);
LayerKind ParseLayerKind(const std::string& name);

struct Layer {
  LayerKind kind = LayerKind::kRelu;
  // Dense: in/out features. Conv2d: in/out channels.
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor<float> weight;
  Tensor<float> bias;
  // Quantizers are attached only to layers flagged as quantizable.
  bool quantizable = false;
  std::optional<QuantizerSpec<float>> weight_quantizer;
  std::optional<QuantizerSpec<float>> activation_quantizer;
  // Set on exported checkpoints whose `weight` already holds W_q.
  bool weights_materialized = false;

  bool parametric() const {
    return kind == LayerKind::kDense || kind == LayerKind::kConv2d;
  }
};

// How a student is quantized. A bit width of 32 or more disables the
// corresponding quantizer (full-precision passthrough).
struct QuantizationPlan {
  QuantizerKind kind = QuantizerKind::kEwgs;
  int weight_bits = 2;
  int activation_bits = 2;
  BackwardRule backward;
  // The first and last parametric layers stay full precision unless set.
  bool quantize_first_last = false;
};

class Network {
 public:
  Network() = default;

  // [in -> hidden -> hidden -> classes] with ReLUs in between.
  static Network Mlp(std::size_t in, std::size_t hidden, std::size_t classes,
                     std::uint64_t seed);
  // conv3x3(8) -> relu -> conv3x3(16) -> relu -> flatten -> dense(classes),
  // stride 1, padding 1.
  static Network Cnn(std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t classes,
                     std::uint64_t seed);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  void AddLayer(Layer layer) { layers_.push_back(std::move(layer)); }

  // Attaches fresh (uninitialized) quantizers to the quantizable layers.
  void Quantize(const QuantizationPlan& plan);
  bool has_quantizers() const;
  bool quantizers_initialized() const;

  // With quantized = true, quantizable layers route their input activations
  // and latent weights through their quantizers.
  Tensor<float> Forward(const Tensor<float>& x, bool quantized) const;

  // Runs a quantized forward pass on `x`, initializing each uninitialized
  // quantizer from the tensor it receives.
  void CalibrateQuantizers(const Tensor<float>& x, const QuantizerInit& init);

  // Latent weights and biases.
  std::vector<Tensor<float>> Parameters() const;
  std::vector<Tensor<float>> QuantizerParameters() const;
  void SetRequiresGrad(bool value);

  Network Clone() const;
  bool SameTopology(const Network& other) const;
  // Copies latent weights/biases from a topology-compatible network.
  void CopyWeightsFrom(const Network& other);
  std::uint64_t ParameterHash() const;

  // Replaces each quantized layer's latent weights with W_q and marks them
  // materialized. Exporting an exported network is a fixed point.
  Network MaterializeQuantizedWeights() const;

 private:
  Tensor<float> ForwardImpl(const Tensor<float>& x, bool quantized,
                            const QuantizerInit* calibrate);

  std::vector<Layer> layers_;
};

}  // namespace sqakd

#endif  // SQAKD_NETWORK_HPP_
