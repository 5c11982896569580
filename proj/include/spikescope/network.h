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

#ifndef SPIKESCOPE_NETWORK_H_
#define SPIKESCOPE_NETWORK_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spikescope/layers.h"
#include "spikescope/network_spec.h"

namespace spikescope {

// Executable network instantiated from a NetworkSpec. One instance holds
// mutable per-call state (saved activations, LIF traces) and must not be
// shared between threads.
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t init_seed);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t input_time_steps() const { return spec_.input_time_steps(); }

  // encoded: [T, N, C, H, W] with T == input_time_steps(). Returns logits
  // averaged over the output time steps, [N, classes]. Throws NumericError
  // naming the first layer that produced a non-finite value.
  Tensor forward(const Tensor& encoded, bool training,
                 const TapSink* sink = nullptr);

  // Backpropagates d loss / d logits through the last forward call and
  // returns d loss / d encoded input, [T, N, C, H, W].
  Tensor backward(const Tensor& grad_logits);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> buffers();
  void zero_grad();

  // Recordable activations in forward order (input first, logits last).
  std::vector<TapInfo> taps() const;

  // Checkpoint: "SPKC" | u32 version | u64 spec-json length | spec json |
  // u32 entry count | entries of (u32 name length, name, tensor container).
  void save(const std::string& path) const;
  static Network load(const std::string& path);

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  Shape encoded_shape_;
  std::size_t output_steps_ = 1;
};

}  // namespace spikescope

#endif  // SPIKESCOPE_NETWORK_H_
