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

#ifndef SPIKESCOPE_ADVERSARIAL_H_
#define SPIKESCOPE_ADVERSARIAL_H_

#include <cstdint>
#include <span>
#include <vector>

#include "spikescope/cka.h"
#include "spikescope/data.h"
#include "spikescope/network.h"

namespace spikescope {

struct AttackConfig {
  double epsilon = 0.0;     // L-infinity budget in normalized input units
  double step_size = 0.0;
  int iterations = 10;
  bool random_start = true;

  // k = 10 steps of 2.5 * epsilon / k.
  static AttackConfig standard(double epsilon);
  void validate() const;
};

// Per-channel valid range of normalized inputs.
struct InputRange {
  std::vector<double> lo;
  std::vector<double> hi;
  static InputRange of(const ImageDataset& data);
};

struct AttackResult {
  Tensor x_adv;
  bool zero_gradient = false;  // the input gradient vanished at every step
};

// d loss / d image for static images [N, C, H, W], summed over the encoded
// time steps. Runs the network in inference mode.
Tensor input_gradient(Network& net, const Tensor& images, std::span<const int> labels,
                      double* loss = nullptr);

// L-infinity PGD on the classification loss. `start` holds a random start
// direction in [-1, 1] shaped like x (scaled by epsilon); it is required
// when cfg.random_start is set so callers can share one start across
// budgets. epsilon == 0 returns x unchanged.
AttackResult pgd_attack(Network& net, const Tensor& x, std::span<const int> labels,
                        const AttackConfig& cfg, const InputRange& range,
                        const Tensor* start = nullptr);

// Clamps x_adv into the epsilon-ball around x and then into range.
void project(Tensor& x_adv, const Tensor& x, double epsilon, const InputRange& range);

struct SweepOptions {
  std::size_t n_examples = 512;
  std::size_t batch_size = 128;
  int iterations = 10;
  double step_ratio = 2.5;  // step = step_ratio * epsilon / iterations
  bool random_start = true;
  std::uint64_t seed = 0;
};

struct SweepRow {
  double epsilon = 0.0;
  std::size_t n_examples = 0;
  double clean_acc = 0.0;
  double adv_acc = 0.0;
  std::size_t zero_gradient_batches = 0;
  double max_perturbation = 0.0;  // max |x_adv - x| over the subset
};

// Attacked accuracy per epsilon (ascending) on a seeded example subset with
// one random start direction shared by every epsilon.
std::vector<SweepRow> robustness_sweep(Network& net, const ImageDataset& data,
                                       const std::vector<double>& epsilons,
                                       const SweepOptions& options);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AdvCkaCurve {
  double epsilon = 0.0;
  std::vector<CurvePoint> curve;
};

// Per-layer CKA between clean and adversarial activations of the same
// examples, one curve per epsilon.
std::vector<AdvCkaCurve> clean_vs_adv_cka(Network& net, const ImageDataset& data,
                                          const std::vector<double>& epsilons,
                                          const SweepOptions& attack,
                                          const RecordOptions& record,
                                          const HeatmapOptions& heatmap);
nlohmann::json to_json(const std::vector<AdvCkaCurve>& curves);

}  // namespace spikescope

#endif  // SPIKESCOPE_ADVERSARIAL_H_
