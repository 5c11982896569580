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

#include "spikescope/train.h"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "spikescope/errors.h"

namespace spikescope {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("train.momentum must be in [0, 1)");
  }
}

Tensor direct_encode(const Tensor& images, std::size_t time_steps) {
  if (time_steps < 1) throw ConfigError("time steps must be >= 1");
  if (images.rank() != 4) {
    throw ConfigError("direct_encode expects [N, C, H, W], got " +
                      shape_str(images.shape()));
  }
  Shape shape = images.shape();
  shape.insert(shape.begin(), time_steps);
  Tensor out(shape);
  for (std::size_t t = 0; t < time_steps; ++t) {
    std::copy_n(images.raw(), images.numel(), out.raw() + t * images.numel());
  }
  return out;
}

Tensor encode_examples(const ImageDataset& data, std::span<const std::size_t> ids,
                       std::size_t time_steps) {
  Tensor batch = gather_examples(data, ids);
  if (data.frames <= 1) return direct_encode(batch, time_steps);
  if (data.frames != time_steps) {
    throw ConfigError("dataset has " + std::to_string(data.frames) +
                      " frames but the network expects " +
                      std::to_string(time_steps) + " time steps");
  }
  const std::size_t n = batch.dim(0), f = batch.dim(1);
  const std::size_t inner = batch.numel() / (n * f);
  Tensor out({f, n, batch.dim(2), batch.dim(3), batch.dim(4)});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < f; ++t) {
      std::copy_n(batch.raw() + (i * f + t) * inner, inner,
                  out.raw() + (t * n + i) * inner);
    }
  }
  return out;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ConfigError("logits " + shape_str(logits.shape()) + " do not match " +
                      std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  SoftmaxLoss out;
  out.grad_logits = Tensor({n, k});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.raw() + i * k;
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= k) {
      throw ConfigError("label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(k) + ")");
    }
    const std::size_t best = std::max_element(z, z + k) - z;
    if (best == y) ++out.correct;
    const double zmax = z[best];
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const double log_denom = std::log(denom);
    total += log_denom - (z[y] - zmax);
    double* g = out.grad_logits.raw() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = (std::exp(z[j] - zmax - log_denom) - (j == y ? 1.0 : 0.0)) / n;
    }
  }
  out.loss = total / static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss at the classifier");
  return out;
}

namespace {

SoftmaxLoss forward_backward(Network& net, const Tensor& encoded,
                             std::span<const int> labels) {
  net.zero_grad();
  Tensor logits = net.forward(encoded, /*training=*/true);
  SoftmaxLoss loss = softmax_cross_entropy(logits, labels);
  net.backward(loss.grad_logits);
  return loss;
}

}  // namespace

LossGrad bptt_step(Network& net, const Tensor& encoded, std::span<const int> labels) {
  SoftmaxLoss loss = forward_backward(net, encoded, labels);
  LossGrad out;
  out.loss = loss.loss;
  out.correct = loss.correct;
  for (Parameter* p : net.parameters()) out.grads.emplace_back(p->name, p->grad);
  return out;
}

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

void sgd_cosine_update(std::span<Parameter* const> params, std::size_t step,
                       std::size_t total_steps, const TrainConfig& cfg) {
  if (step >= total_steps) {
    throw ConfigError("step " + std::to_string(step) + " beyond schedule of " +
                      std::to_string(total_steps));
  }
  const double lr = cosine_lr(cfg.lr, step, total_steps);
  for (Parameter* p : params) {
    if (p->velocity.shape() != p->value.shape()) {
      p->velocity = Tensor::zeros_like(p->value);
    }
    const double wd = p->decay ? cfg.weight_decay : 0.0;
    double* w = p->value.raw();
    double* v = p->velocity.raw();
    const double* g = p->grad.raw();
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i];
      w[i] -= lr * (v[i] + wd * w[i]);
    }
  }
}

TrainResult train(Network& net, const ImageDataset& train_set,
                  const ImageDataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  train_set.validate();
  if (train_set.class_count != net.spec().num_classes) {
    throw ConfigError("dataset has " + std::to_string(train_set.class_count) +
                      " classes, network has " +
                      std::to_string(net.spec().num_classes));
  }
  const std::size_t n = train_set.size();
  std::size_t batches = n / cfg.batch_size;
  if (n % cfg.batch_size >= 2) ++batches;
  if (batches == 0) throw ConfigError("training set smaller than two examples");
  const std::size_t total = batches * cfg.epochs;
  const std::size_t steps = net.input_time_steps();
  const bool augment = cfg.augment && train_set.frames <= 1;
  GemmPrecisionScope precision(cfg.precision);

  auto params = net.parameters();
  Rng aug_rng(Rng::derive(cfg.seed, "augment"));
  std::vector<std::size_t> order(n);
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(Rng::derive(cfg.seed, "shuffle." + std::to_string(epoch)));
    shuffle.shuffle(std::span<std::size_t>(order));
    EpochLog row;
    row.epoch = epoch + 1;
    row.lr = cosine_lr(cfg.lr, step, total);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      std::span<const std::size_t> ids(order.data() + lo, hi - lo);
      Tensor encoded;
      if (augment) {
        encoded = direct_encode(augment_crop_flip(gather_examples(train_set, ids), aug_rng),
                                steps);
      } else {
        encoded = encode_examples(train_set, ids, steps);
      }
      const std::vector<int> labels = gather_labels(train_set, ids);
      SoftmaxLoss loss;
      try {
        loss = forward_backward(net, encoded, labels);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                           ", step " + std::to_string(step) + ": " + e.what());
      }
      sgd_cosine_update(params, step, total, cfg);
      loss_sum += loss.loss * ids.size();
      correct += loss.correct;
      seen += ids.size();
    }
    row.train_loss = loss_sum / seen;
    row.train_acc = static_cast<double>(correct) / seen;
    row.test_acc = test_set.size() ? evaluate(net, test_set) : 0.0;
    row.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.final_test_acc = result.log.back().test_acc;
  return result;
}

std::vector<int> predict(Network& net, const Tensor& encoded) {
  Tensor logits = net.forward(encoded, /*training=*/false);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.raw() + i * k;
    out[i] = static_cast<int>(std::max_element(z, z + k) - z);
  }
  return out;
}

double evaluate(Network& net, const ImageDataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::size_t correct = 0;
  std::vector<std::size_t> ids;
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    const std::size_t hi = std::min(data.size(), lo + batch_size);
    ids.resize(hi - lo);
    std::iota(ids.begin(), ids.end(), lo);
    const auto pred = predict(net, encode_examples(data, ids, net.input_time_steps()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (pred[i] == data.labels[lo + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,lr,train_loss,train_acc,test_acc,wall_seconds\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ','
        << r.test_acc << ',' << r.wall_seconds << '\n';
  }
  return out.str();
}

// ---- Linear probe ----------------------------------------------------------

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t) {
  if (t.rank() != 2) {
    throw ConfigError("probe features must be [m, d], got " + shape_str(t.shape()));
  }
  return Eigen::Map<const RowMatrix>(t.raw(), t.dim(0), t.dim(1));
}

double accuracy(const RowMatrix& scores, std::span<const int> labels) {
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    if (best == labels[i]) ++hit;
  }
  return labels.empty() ? 0.0 : static_cast<double>(hit) / labels.size();
}

}  // namespace

ProbeResult linear_probe(const Tensor& train_features, std::span<const int> train_labels,
                         const Tensor& test_features, std::span<const int> test_labels,
                         std::size_t class_count, const ProbeOptions& options) {
  const auto xtr = as_matrix(train_features);
  const auto xte = as_matrix(test_features);
  if (static_cast<std::size_t>(xtr.rows()) != train_labels.size() ||
      static_cast<std::size_t>(xte.rows()) != test_labels.size() ||
      xtr.cols() != xte.cols()) {
    throw ConfigError("probe features and labels disagree in shape");
  }
  const Eigen::Index m = xtr.rows(), d = xtr.cols();
  const auto k = static_cast<Eigen::Index>(class_count);

  // Standardize with train statistics; constant columns are dropped.
  Eigen::RowVectorXd mean = xtr.colwise().mean();
  Eigen::RowVectorXd inv_std(d);
  std::size_t live = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (xtr.col(j).array() - mean(j)).square().mean();
    const bool constant = !(var > 1e-12 * std::max(1.0, mean(j) * mean(j)));
    inv_std(j) = constant ? 0.0 : 1.0 / std::sqrt(var);
    if (!constant) ++live;
  }
  ProbeResult result;
  if (live == 0 || m == 0) {
    result.degenerate = true;
    result.train_acc = result.test_acc = 1.0 / static_cast<double>(class_count);
    return result;
  }
  RowMatrix a = (xtr.rowwise() - mean).array().rowwise() * inv_std.array();
  RowMatrix b = (xte.rowwise() - mean).array().rowwise() * inv_std.array();

  // Largest eigenvalue of A^T A / m by power iteration bounds the curvature.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d).normalized();
  double lambda = 1.0;
  for (int it = 0; it < 30; ++it) {
    Eigen::VectorXd w = a.transpose() * (a * v) / static_cast<double>(m);
    lambda = w.norm();
    if (lambda <= 0.0) break;
    v = w / lambda;
  }
  const double lipschitz = 0.5 * std::max(lambda, 1e-12) + options.l2;
  const double step = options.step_scale / lipschitz;

  RowMatrix w = RowMatrix::Zero(d, k);
  Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(k);
  RowMatrix vw = RowMatrix::Zero(d, k);
  Eigen::RowVectorXd vb = Eigen::RowVectorXd::Zero(k);
  RowMatrix onehot = RowMatrix::Zero(m, k);
  for (Eigen::Index i = 0; i < m; ++i) onehot(i, train_labels[i]) = 1.0;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    RowMatrix z = (a * w).rowwise() + bias;
    Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    z = (z.colwise() - zmax).array().exp();
    Eigen::VectorXd denom = z.rowwise().sum();
    z = z.array().colwise() / denom.array();
    RowMatrix g = (z - onehot) / static_cast<double>(m);
    RowMatrix gw = a.transpose() * g + options.l2 * w;
    Eigen::RowVectorXd gb = g.colwise().sum();
    vw = 0.9 * vw + gw;
    vb = 0.9 * vb + gb;
    w -= step * vw;
    bias -= step * vb;
  }
  result.train_acc = accuracy((a * w).rowwise() + bias, train_labels);
  result.test_acc = accuracy((b * w).rowwise() + bias, test_labels);
  return result;
}

std::vector<ProbeResult> probe_layers(const std::vector<ActivationRecord>& train_records,
                                      std::span<const int> train_labels,
                                      const std::vector<ActivationRecord>& test_records,
                                      std::span<const int> test_labels,
                                      std::size_t class_count,
                                      const ProbeOptions& options) {
  if (train_records.size() != test_records.size()) {
    throw ConfigError("train and test recordings tap different layer sets");
  }
  std::vector<ProbeResult> out;
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    if (!(train_records[i].layer == test_records[i].layer)) {
      throw ConfigError("layer mismatch at tap " + std::to_string(i) + ": " +
                        train_records[i].layer.name + " vs " +
                        test_records[i].layer.name);
    }
    ProbeResult r = linear_probe(train_records[i].features, train_labels,
                                 test_records[i].features, test_labels, class_count,
                                 options);
    r.layer = train_records[i].layer;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace spikescope
