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

#include "spikescope/adversarial.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spikescope/errors.h"
#include "spikescope/ops.h"
#include "spikescope/train.h"

namespace spikescope {
namespace {

void require_static(const ImageDataset& data) {
  if (data.frames > 1) {
    throw ConfigError("attacks operate on static images; the dataset has " +
                      std::to_string(data.frames) + " frames per example");
  }
}

ImageDataset subset(const ImageDataset& data, std::span<const std::size_t> ids) {
  ImageDataset out;
  out.images = gather_examples(data, ids);
  out.labels = gather_labels(data, ids);
  out.class_count = data.class_count;
  out.split = data.split;
  out.frames = data.frames;
  out.norm = data.norm;
  out.min_value = data.min_value;
  out.max_value = data.max_value;
  return out;
}

Tensor slice_examples(const Tensor& x, std::size_t lo, std::size_t n) {
  Shape shape = x.shape();
  const std::size_t stride = x.numel() / shape[0];
  shape[0] = n;
  Tensor out(shape);
  std::copy_n(x.raw() + lo * stride, n * stride, out.raw());
  return out;
}

// Attacks the whole tensor in batches; returns the adversarial images and the
// number of batches whose gradient vanished.
std::pair<Tensor, std::size_t> attack_all(Network& net, const ImageDataset& data,
                                          double epsilon, const SweepOptions& o,
                                          const Tensor& start) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.iterations = o.iterations;
  cfg.step_size = o.step_ratio * epsilon / o.iterations;
  cfg.random_start = o.random_start;
  const InputRange range = InputRange::of(data);
  Tensor out(data.images.shape());
  const std::size_t stride = data.images.numel() / std::max<std::size_t>(data.size(), 1);
  const std::size_t batch = std::max<std::size_t>(1, o.batch_size);
  std::size_t zero = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += batch) {
    const std::size_t n = std::min(batch, data.size() - lo);
    const Tensor x = slice_examples(data.images, lo, n);
    const Tensor s = slice_examples(start, lo, n);
    std::span<const int> labels(data.labels.data() + lo, n);
    AttackResult r = pgd_attack(net, x, labels, cfg, range, o.random_start ? &s : nullptr);
    if (r.zero_gradient) ++zero;
    std::copy_n(r.x_adv.raw(), n * stride, out.raw() + lo * stride);
  }
  return {std::move(out), zero};
}

}  // namespace

AttackConfig AttackConfig::standard(double epsilon) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.iterations = 10;
  c.step_size = 2.5 * epsilon / c.iterations;
  c.random_start = true;
  return c;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("attack epsilon must be >= 0");
  if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
  if (epsilon > 0.0 && !(step_size > 0.0)) {
    throw ConfigError("attack step size must be > 0");
  }
  if (step_size > epsilon) {
    throw ConfigError("attack step size " + std::to_string(step_size) +
                      " exceeds epsilon " + std::to_string(epsilon));
  }
}

InputRange InputRange::of(const ImageDataset& data) {
  if (data.min_value.size() != data.channels() || data.max_value.size() != data.channels()) {
    throw ConfigError("dataset carries no valid input range");
  }
  return {data.min_value, data.max_value};
}

Tensor input_gradient(Network& net, const Tensor& images, std::span<const int> labels,
                      double* loss) {
  const std::size_t steps = net.input_time_steps();
  net.zero_grad();
  Tensor logits = net.forward(direct_encode(images, steps), /*training=*/false);
  SoftmaxLoss l = softmax_cross_entropy(logits, labels);
  if (loss) *loss = l.loss;
  Tensor g = net.backward(l.grad_logits);
  Tensor out(images.shape());
  const std::size_t per_step = images.numel();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < per_step; ++i) out[i] += g[t * per_step + i];
  }
  return out;
}

void project(Tensor& x_adv, const Tensor& x, double epsilon, const InputRange& range) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t plane = x.numel() / (n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double v = std::clamp(x_adv[base + p], x[base + p] - epsilon, x[base + p] + epsilon);
        x_adv[base + p] = std::clamp(v, range.lo[ch], range.hi[ch]);
      }
    }
  }
}

AttackResult pgd_attack(Network& net, const Tensor& x, std::span<const int> labels,
                        const AttackConfig& cfg, const InputRange& range,
                        const Tensor* start) {
  cfg.validate();
  if (x.rank() != 4 || x.dim(0) != labels.size()) {
    throw ConfigError("attack expects [N, C, H, W] images with one label each, got " +
                      shape_str(x.shape()));
  }
  if (range.lo.size() != x.dim(1) || range.hi.size() != x.dim(1)) {
    throw ConfigError("input range does not match the channel count");
  }
  AttackResult result;
  result.x_adv = x;
  if (cfg.epsilon == 0.0) return result;
  if (cfg.random_start) {
    if (!start || start->shape() != x.shape()) {
      throw ConfigError("random start needs a start direction shaped like the input");
    }
    for (std::size_t i = 0; i < x.numel(); ++i) {
      result.x_adv[i] += cfg.epsilon * (*start)[i];
    }
    project(result.x_adv, x, cfg.epsilon, range);
  }
  result.zero_gradient = true;
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor g = input_gradient(net, result.x_adv, labels);
    bool any = false;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (g[i] > 0.0) {
        result.x_adv[i] += cfg.step_size;
        any = true;
      } else if (g[i] < 0.0) {
        result.x_adv[i] -= cfg.step_size;
        any = true;
      }
    }
    if (any) result.zero_gradient = false;
    project(result.x_adv, x, cfg.epsilon, range);
  }
  return result;
}

std::vector<SweepRow> robustness_sweep(Network& net, const ImageDataset& data,
                                       const std::vector<double>& epsilons,
                                       const SweepOptions& options) {
  require_static(data);
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw ConfigError("epsilon list must be sorted ascending");
  }
  const auto ids = select_examples(data.size(), options.n_examples, options.seed);
  const ImageDataset sub = subset(data, ids);
  Rng rng(Rng::derive(options.seed, "attack.start"));
  const Tensor start = random_uniform(sub.images.shape(), rng, -1.0, 1.0);
  const double clean = evaluate(net, sub, options.batch_size);
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    auto [adv, zero] = attack_all(net, sub, eps, options, start);
    ImageDataset attacked = sub;
    attacked.images = std::move(adv);
    SweepRow row{eps, sub.size(), clean, evaluate(net, attacked, options.batch_size), zero,
                 max_abs_diff(attacked.images, sub.images)};
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epsilon,n_examples,clean_acc,adv_acc\n";
  for (const auto& r : rows) {
    out << r.epsilon << ',' << r.n_examples << ',' << r.clean_acc << ',' << r.adv_acc
        << '\n';
  }
  return out.str();
}

std::vector<AdvCkaCurve> clean_vs_adv_cka(Network& net, const ImageDataset& data,
                                          const std::vector<double>& epsilons,
                                          const SweepOptions& attack,
                                          const RecordOptions& record,
                                          const HeatmapOptions& heatmap) {
  require_static(data);
  const auto ids = select_examples(data.size(), attack.n_examples, attack.seed);
  const ImageDataset sub = subset(data, ids);
  std::vector<std::size_t> local(sub.size());
  std::iota(local.begin(), local.end(), 0);
  Rng rng(Rng::derive(attack.seed, "attack.start"));
  const Tensor start = random_uniform(sub.images.shape(), rng, -1.0, 1.0);
  const auto clean = record_activations(net, sub, local, record);
  std::vector<AdvCkaCurve> curves;
  for (double eps : epsilons) {
    ImageDataset attacked = sub;
    attacked.images = attack_all(net, sub, eps, attack, start).first;
    const auto adv = record_activations(net, attacked, local, record);
    curves.push_back({eps, diagonal_curve(cross_layer_heatmap(clean, adv, heatmap))});
  }
  return curves;
}

nlohmann::json to_json(const std::vector<AdvCkaCurve>& curves) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : curves) {
    out.push_back({{"epsilon", c.epsilon}, {"curve", to_json(c.curve)}});
  }
  return out;
}

}  // namespace spikescope
