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

#ifndef SQAKD_CHECKPOINT_HPP_
#define SQAKD_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "sqakd/network.hpp"

namespace sqakd {

inline constexpr int kCheckpointFormatVersion = 1;

// A checkpoint is a directory holding `manifest.json` plus one raw
// little-endian float32 blob per tensor, referenced by name from the manifest.
struct Checkpoint {
  Network network;
  std::uint64_t seed = 0;
};

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& dir);
Checkpoint LoadCheckpoint(const std::string& dir);

}  // namespace sqakd

#endif  // SQAKD_CHECKPOINT_HPP_
