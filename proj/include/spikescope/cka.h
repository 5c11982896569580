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

#ifndef SPIKESCOPE_CKA_H_
#define SPIKESCOPE_CKA_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikescope/activations.h"
#include "spikescope/data.h"
#include "spikescope/network.h"

namespace spikescope {

// ---- Recording -------------------------------------------------------------

struct RecordOptions {
  std::size_t n_examples = 4096;
  std::vector<std::string> kinds;  // tap kinds to keep; empty keeps all
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  // Maximum stored width per record (all time steps together).
  std::size_t feature_budget = std::size_t{1} << 16;
  // Without this flag a record wider than feature_budget is an error.
  bool subsample = false;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

// The first n indices of a seeded permutation of [0, dataset_size).
std::vector<std::size_t> select_examples(std::size_t dataset_size, std::size_t n,
                                         std::uint64_t seed);

// Inference-mode activations of every selected tap, in network order.
std::vector<ActivationRecord> record_activations(Network& net, const ImageDataset& data,
                                                 const RecordOptions& options);
// Same, on an explicit example list (n_examples is ignored).
std::vector<ActivationRecord> record_activations(Network& net, const ImageDataset& data,
                                                 std::span<const std::size_t> ids,
                                                 const RecordOptions& options);

void save_records(const std::string& dir, const std::vector<ActivationRecord>& records);

// ---- Estimators ------------------------------------------------------------

enum class Estimator { kBiased, kUnbiased };
std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& s);

// K = X X^T for X: [m, d].
Tensor gram_linear(const Tensor& x);

// tr(K H L H) / (m - 1)^2 without forming H. Throws DomainError when m < 2.
double hsic_biased(const Tensor& k, const Tensor& l);
// The U-statistic estimator on zero-diagonal Gram matrices. Throws
// DomainError when m < 4.
double hsic_unbiased(const Tensor& k, const Tensor& l);

// Linear CKA. Returns nullopt when either self-similarity is not positive
// relative to the Gram scale (e.g. constant or all-zero features).
std::optional<double> cka(const Tensor& x, const Tensor& y,
                          Estimator estimator = Estimator::kUnbiased);

// Averages HSIC(X,Y), HSIC(X,X), HSIC(Y,Y) over equally sized batches and
// forms the ratio once.
class MinibatchCka {
 public:
  explicit MinibatchCka(Estimator estimator = Estimator::kUnbiased)
      : estimator_(estimator) {}

  void add(const Tensor& x, const Tensor& y);
  void add_grams(const Tensor& k, const Tensor& l);
  std::optional<double> value() const;
  std::size_t batches() const { return batches_; }

 private:
  Estimator estimator_;
  std::size_t batches_ = 0;
  std::size_t batch_size_ = 0;
  double xy_ = 0.0, xx_ = 0.0, yy_ = 0.0;
  double scale_x_ = 0.0, scale_y_ = 0.0;
};

std::optional<double> cka_minibatch(std::span<const Tensor> xs,
                                    std::span<const Tensor> ys,
                                    Estimator estimator = Estimator::kUnbiased);

// ---- Heatmaps --------------------------------------------------------------

struct HeatmapOptions {
  Estimator estimator = Estimator::kUnbiased;
  // Examples per minibatch; m <= batch_size uses a single batch. A trailing
  // partial batch is dropped.
  std::size_t batch_size = 256;
  // Worker threads; 0 reads SPIKESCOPE_THREADS (default 1).
  std::size_t threads = 0;
};

struct CkaHeatmap {
  std::vector<TapInfo> rows;
  std::vector<TapInfo> cols;
  std::vector<std::optional<double>> values;  // row-major; nullopt = undefined
  Estimator estimator = Estimator::kUnbiased;
  std::size_t examples = 0;
  std::size_t batch_size = 0;

  std::optional<double> at(std::size_t i, std::size_t j) const {
    return values[i * cols.size() + j];
  }
};

CkaHeatmap cross_layer_heatmap(const std::vector<ActivationRecord>& a,
                               const std::vector<ActivationRecord>& b,
                               const HeatmapOptions& options = {});

nlohmann::json to_json(const CkaHeatmap& heatmap);
CkaHeatmap heatmap_from_json(const nlohmann::json& j);
std::string heatmap_csv(const CkaHeatmap& heatmap);
// Binary greyscale (P5). Defined values map to 1..255 after clamping to
// [0, 1]; 0 is reserved for undefined cells.
std::string heatmap_pgm(const CkaHeatmap& heatmap, std::size_t cell_pixels = 8);

struct CurvePoint {
  TapInfo layer;
  std::optional<double> value;
};

// The diagonal of a square heatmap whose row and column layers match.
std::vector<CurvePoint> diagonal_curve(const CkaHeatmap& heatmap);
nlohmann::json to_json(const std::vector<CurvePoint>& curve);

// [T, T] CKA between the time slices of one record; NaN marks undefined
// entries.
Tensor cross_time_heatmap(const ActivationRecord& record, std::size_t time_steps,
                          Estimator estimator = Estimator::kBiased);
nlohmann::json cross_time_to_json(const TapInfo& layer, const Tensor& heatmap);

std::size_t worker_threads(std::size_t requested);

}  // namespace spikescope

#endif  // SPIKESCOPE_CKA_H_
