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

#include "sqakd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace sqakd {

std::size_t Dataset::size() const {
  const std::size_t per = sample_size();
  return per == 0 ? 0 : features.size() / per;
}

Tensor<float> Dataset::Batch(std::span<const std::size_t> indices) const {
  const std::size_t per = sample_size();
  std::vector<float> out;
  out.reserve(indices.size() * per);
  for (const std::size_t i : indices) {
    if (i >= size()) throw DataError(DataFault::kGeneric, "sample index out of range");
    const auto first = features.begin() + static_cast<std::ptrdiff_t>(i * per);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(per));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return Tensor<float>(std::move(shape), std::move(out));
}

std::vector<int> Dataset::BatchLabels(std::span<const std::size_t> indices) const {
  if (!labels) {
    throw DataError(DataFault::kMissingLabels, "dataset carries no labels");
  }
  std::vector<int> out;
  out.reserve(indices.size());
  for (const std::size_t i : indices) out.push_back(labels->at(i));
  return out;
}

Dataset Dataset::WithoutLabels() const {
  Dataset copy = *this;
  copy.labels.reset();
  return copy;
}

Dataset GenerateSynthetic(SyntheticKind kind, std::size_t n,
                          std::size_t classes, std::uint64_t seed,
                          double moons_noise) {
  if (classes == 0 || n < classes) {
    throw ConfigError("synthetic data needs n >= classes >= 1");
  }
  std::mt19937_64 rng(seed);
  Dataset data;
  data.sample_shape = {2};
  data.num_classes = classes;
  data.features.reserve(2 * n);
  std::vector<int> labels;
  labels.reserve(n);

  if (kind == SyntheticKind::kBlobs) {
    constexpr double kRadius = 3.0;
    constexpr double kSigma = 0.5;
    std::normal_distribution<double> noise(0.0, kSigma);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % classes;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                           static_cast<double>(classes);
      data.features.push_back(static_cast<float>(kRadius * std::cos(angle) + noise(rng)));
      data.features.push_back(static_cast<float>(kRadius * std::sin(angle) + noise(rng)));
      labels.push_back(static_cast<int>(c));
    }
  } else {
    if (classes != 2) throw ConfigError("moons is a 2-class dataset");
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n_outer = n / 2;
    const std::size_t n_inner = n - n_outer;
    auto emit = [&](double x, double y, int label) {
      if (moons_noise > 0.0) {
        x += moons_noise * noise(rng);
        y += moons_noise * noise(rng);
      }
      data.features.push_back(static_cast<float>(x));
      data.features.push_back(static_cast<float>(y));
      labels.push_back(label);
    };
    auto angle = [](std::size_t i, std::size_t count) {
      return count <= 1 ? 0.0
                        : std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(count - 1);
    };
    for (std::size_t i = 0; i < n_outer; ++i) {
      const double t = angle(i, n_outer);
      emit(std::cos(t), std::sin(t), 0);
    }
    for (std::size_t i = 0; i < n_inner; ++i) {
      const double t = angle(i, n_inner);
      emit(1.0 - std::cos(t), 0.5 - std::sin(t), 1);
    }
  }
  data.labels = std::move(labels);
  return data;
}

namespace {

struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

std::uint32_t ReadBigEndian(const std::vector<std::uint8_t>& bytes,
                            std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

IdxFile ReadIdx(const std::string& path, std::uint32_t expected_magic) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError(DataFault::kPath, "IDX file not found: " + path);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataFault::kPath, "cannot open IDX file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 4) {
    throw DataError(DataFault::kTruncated, "IDX file too short for a header: " + path);
  }
  IdxFile file;
  file.magic = ReadBigEndian(bytes, 0);
  if (file.magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x (expected 0x%08x)", file.magic,
                  expected_magic);
    throw DataError(DataFault::kBadMagic, "bad IDX magic " + std::string(buf) +
                                              " in " + path);
  }
  const std::size_t rank = file.magic & 0xff;
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) {
    throw DataError(DataFault::kTruncated, "IDX header truncated: " + path);
  }
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    file.dims.push_back(ReadBigEndian(bytes, 4 + 4 * d));
    count *= file.dims.back();
  }
  if (bytes.size() - header < count) {
    throw DataError(DataFault::kTruncated,
                    "IDX payload truncated: expected " + std::to_string(count) +
                        " bytes, found " + std::to_string(bytes.size() - header) +
                        " in " + path);
  }
  file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                      bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return file;
}

}  // namespace

std::vector<int> LoadIdxLabels(const std::string& path) {
  const IdxFile file = ReadIdx(path, kIdxLabelMagic);
  return std::vector<int>(file.payload.begin(), file.payload.end());
}

Dataset LoadIdx(const std::string& images_path, const std::string& labels_path) {
  const IdxFile images = ReadIdx(images_path, kIdxImageMagic);
  const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
  Dataset data;
  data.sample_shape = {1, h, w};
  data.features.reserve(images.payload.size());
  for (const std::uint8_t v : images.payload) {
    data.features.push_back(static_cast<float>(v) / 255.0f);
  }
  if (!labels_path.empty()) {
    auto labels = LoadIdxLabels(labels_path);
    if (labels.size() != n) {
      throw DataError(DataFault::kCountMismatch,
                      "IDX count mismatch: " + std::to_string(n) + " images, " +
                          std::to_string(labels.size()) + " labels");
    }
    const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    data.labels = std::move(labels);
  }
  return data;
}

}  // namespace sqakd
