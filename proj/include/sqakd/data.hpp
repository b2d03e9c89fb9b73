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

#ifndef SQAKD_DATA_HPP_
#define SQAKD_DATA_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqakd/tensor.hpp"

namespace sqakd {

// In-memory classification dataset. Labels are optional so that a
// self-supervised run can be fed a loader that physically has none.
struct Dataset {
  Shape sample_shape;
  std::vector<float> features;
  std::optional<std::vector<int>> labels;
  std::size_t num_classes = 0;

  std::size_t size() const;
  std::size_t sample_size() const { return NumElements(sample_shape); }
  bool has_labels() const { return labels.has_value(); }

  Tensor<float> Batch(std::span<const std::size_t> indices) const;
  std::vector<int> BatchLabels(std::span<const std::size_t> indices) const;
  Dataset WithoutLabels() const;
};

enum class SyntheticKind { kBlobs, kMoons };

// blobs: isotropic Gaussians (sigma 0.5) centered on a circle of radius 3,
// one per class. moons: two interleaved half circles plus Gaussian noise.
Dataset GenerateSynthetic(SyntheticKind kind, std::size_t n,
                          std::size_t classes, std::uint64_t seed,
                          double moons_noise = 0.1);

// IDX files: big-endian u32 magic then big-endian u32 dims, u8 payload.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Images are scaled to [0, 1] and shaped [N, 1, H, W]. When `labels_path` is
// non-empty the label count must match the image count.
Dataset LoadIdx(const std::string& images_path,
                const std::string& labels_path = "");

std::vector<int> LoadIdxLabels(const std::string& path);

}  // namespace sqakd

#endif  // SQAKD_DATA_HPP_
