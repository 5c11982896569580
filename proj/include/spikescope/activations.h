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

#ifndef SPIKESCOPE_ACTIVATIONS_H_
#define SPIKESCOPE_ACTIVATIONS_H_

#include <cstdint>
#include <vector>

#include "spikescope/layers.h"
#include "spikescope/tensor.h"

namespace spikescope {

// Activations of one tapped layer for m examples. For spiking layers the T
// time slices are concatenated along the feature axis, so features is
// [m, time_steps * p] with slice t occupying columns [t*p, (t+1)*p).
struct ActivationRecord {
  TapInfo layer;
  std::size_t time_steps = 1;
  Tensor features;
  std::vector<std::size_t> example_ids;
  // Per-step width before column subsampling; equals the stored per-step
  // width when not subsampled.
  std::size_t source_width = 0;
  bool subsampled = false;
  std::uint64_t subsample_seed = 0;

  std::size_t examples() const { return features.rank() ? features.dim(0) : 0; }
  std::size_t width() const { return features.rank() ? features.dim(1) : 0; }
};

}  // namespace spikescope

#endif  // SPIKESCOPE_ACTIVATIONS_H_
