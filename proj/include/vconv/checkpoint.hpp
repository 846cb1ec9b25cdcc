/*
 * Copyright 2026 The vconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <memory>
#include <string>

#include "vconv/neural.hpp"

namespace vconv::checkpoint {

// Binary model file: magic "PVC1", format version, stage tag ("net1"/"net2"/
// "net3"), layer-convention tags, the NetworkConfig, then each named tensor
// as little-endian IEEE-754 doubles, row-major, prefixed by name and shape.
// save(load(f)) reproduces f byte for byte.

inline constexpr char kMagic[4] = {'P', 'V', 'C', '1'};
inline constexpr std::uint32_t kVersion = 1;

// Gate order, candidate gating, update mixing and batch-norm statistics
// conventions baked into the network implementation.
inline constexpr const char* kConventions =
    "gru=zrn,reset-gated-candidate,h'=(1-z)n+zh;bn=per-channel-time,biased,momentum=0.1";

struct Loaded {
  std::unique_ptr<neural::Network> net;
  std::string stage;
};

void save(const std::string& path, const neural::Network& net, const std::string& stage);
Loaded load(const std::string& path);

std::string serialize(const neural::Network& net, const std::string& stage);
Loaded deserialize(const std::string& bytes, const std::string& origin);

}  // namespace vconv::checkpoint
