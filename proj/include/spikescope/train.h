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

#ifndef SPIKESCOPE_TRAIN_H_
#define SPIKESCOPE_TRAIN_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikescope/activations.h"
#include "spikescope/data.h"
#include "spikescope/network.h"
#include "spikescope/ops.h"

namespace spikescope {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool augment = false;  // crop + flip, static images only
  // Convolution GEMM precision during training and its per-epoch evaluation.
  GemmPrecision precision = GemmPrecision::kFloat64;

  void validate() const;
};

// [N, C, H, W] -> [T, N, C, H, W], the same image at every step.
Tensor direct_encode(const Tensor& images, std::size_t time_steps);

// Network input for the selected examples. Static images are direct-encoded
// to `time_steps`; frame datasets are transposed to [F, n, ...] and need
// F == time_steps.
Tensor encode_examples(const ImageDataset& data, std::span<const std::size_t> ids,
                       std::size_t time_steps);

struct SoftmaxLoss {
  double loss = 0.0;       // mean cross-entropy
  Tensor grad_logits;      // d loss / d logits
  std::size_t correct = 0; // argmax hits
};

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct LossGrad {
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::pair<std::string, Tensor>> grads;
};

// One forward/backward pass in training mode; gradients are left in the
// parameters and also returned by name.
LossGrad bptt_step(Network& net, const Tensor& encoded, std::span<const int> labels);

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps);

// Momentum SGD at the cosine-annealed rate for `step`. Weight decay applies
// only to parameters flagged for it.
void sgd_cosine_update(std::span<Parameter* const> params, std::size_t step,
                       std::size_t total_steps, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double final_test_acc = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Deterministic given cfg.seed and the network's initial weights. Batches of
// fewer than two examples are dropped (normalization needs statistics).
TrainResult train(Network& net, const ImageDataset& train_set,
                  const ImageDataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Top-1 accuracy in inference mode over the whole split.
double evaluate(Network& net, const ImageDataset& data, std::size_t batch_size = 256);
std::vector<int> predict(Network& net, const Tensor& encoded);

// CSV: epoch,lr,train_loss,train_acc,test_acc,wall_seconds
std::string train_log_csv(const std::vector<EpochLog>& log);

struct ProbeOptions {
  std::size_t iterations = 300;
  double step_scale = 1.0;  // multiple of 1 / (Lipschitz bound of the loss)
  double l2 = 1e-4;
};

struct ProbeResult {
  TapInfo layer;
  double train_acc = 0.0;
  double test_acc = 0.0;
  bool degenerate = false;  // every feature constant on the train set
};

// Softmax regression on standardized frozen features, full-batch gradient
// descent with momentum. Constant features yield chance accuracy.
ProbeResult linear_probe(const Tensor& train_features, std::span<const int> train_labels,
                         const Tensor& test_features, std::span<const int> test_labels,
                         std::size_t class_count, const ProbeOptions& options = {});

std::vector<ProbeResult> probe_layers(const std::vector<ActivationRecord>& train_records,
                                      std::span<const int> train_labels,
                                      const std::vector<ActivationRecord>& test_records,
                                      std::span<const int> test_labels,
                                      std::size_t class_count,
                                      const ProbeOptions& options = {});

}  // namespace spikescope

#endif  // SPIKESCOPE_TRAIN_H_
