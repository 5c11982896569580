// Copyright 2026 The Spikescope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPIKESCOPE_NETWORK_SPEC_H_
#define SPIKESCOPE_NETWORK_SPEC_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikescope/lif.h"

namespace spikescope {

enum class LayerKind {
  kConv,
  kBn,
  kTdbn,
  kRelu,
  kLif,
  kAvgPool,
  kGlobalPool,
  kFc,
  kResidualBlock,
  kTimeAdapter,
};

enum class Mode { kAnn, kSnn };
enum class Family { kResnet, kVgg };

std::string to_string(LayerKind kind);
std::string to_string(Mode mode);
std::string to_string(Family family);
LayerKind parse_layer_kind(const std::string& s);
Mode parse_mode(const std::string& s);
Family parse_family(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::string name;
  int stage = 0;  // 0 = stem/head; resnet stages and vgg blocks count from 1
  int block = 0;  // residual block index within its stage, from 1

  // conv / fc / norm
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool bias = false;

  // residual_block
  bool residual = true;
  std::vector<LayerSpec> branch;
  std::vector<LayerSpec> shortcut;  // empty = identity

  // time_adapter
  std::size_t time_steps = 0;
  TimePolicy policy = TimePolicy::kRepeat;

  bool operator==(const LayerSpec&) const = default;
};

struct StageFlags {
  bool residual_enabled = true;
  std::optional<std::size_t> time_steps_override;
  bool operator==(const StageFlags&) const = default;
};

// Declarative architecture. `layers` is the executable layer list; the other
// fields record how it was built.
struct NetworkSpec {
  Family family = Family::kResnet;
  int depth = 20;
  int width_factor = 1;
  std::size_t base_channels = 16;
  Mode mode = Mode::kSnn;
  std::size_t time_steps = 4;
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;
  std::size_t image_size = 32;
  LIFConfig lif;
  std::vector<StageFlags> stages;
  std::vector<LayerSpec> layers;

  // Time steps seen by the first layer (1 for ann mode).
  std::size_t input_time_steps() const;
  bool operator==(const NetworkSpec&) const = default;
};

nlohmann::json to_json(const LayerSpec& layer);
nlohmann::json to_json(const NetworkSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

struct ArchOptions {
  Family family = Family::kResnet;
  int depth = 20;
  int width_factor = 1;
  std::size_t base_channels = 0;  // 0 = family default (16 resnet, 64 vgg)
  Mode mode = Mode::kSnn;
  std::size_t time_steps = 4;
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;
  std::size_t image_size = 32;
  LIFConfig lif;
  // Per-stage flags for resnet (3 entries); empty means defaults.
  std::vector<StageFlags> stages;
};

// Residual blocks per stage for a supported resnet depth; throws otherwise.
int resnet_blocks_per_stage(int depth);
// Convolutions per block for a supported vgg depth; throws otherwise.
std::vector<int> vgg_block_layout(int depth);

NetworkSpec build_resnet(const ArchOptions& options);
NetworkSpec build_vgg(const ArchOptions& options);
NetworkSpec build_network(const ArchOptions& options);

}  // namespace spikescope

#endif  // SPIKESCOPE_NETWORK_SPEC_H_
