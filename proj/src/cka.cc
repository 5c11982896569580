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

#include "spikescope/cka.h"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "spikescope/errors.h"
#include "spikescope/train.h"

namespace spikescope {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Self-similarity below this fraction of (tr(K)/m)^2 counts as constant
// features; roundoff of the unbiased estimator on exactly constant inputs
// stays several orders of magnitude below it.
constexpr double kUndefinedRelTol = 1e-10;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ConfigError(std::string(what) + " must be a matrix, got " +
                      shape_str(t.shape()));
  }
  return Eigen::Map<const RowMatrix>(t.raw(), t.dim(0), t.dim(1));
}

void require_square_pair(const Tensor& k, const Tensor& l) {
  if (k.rank() != 2 || k.dim(0) != k.dim(1) || k.shape() != l.shape()) {
    throw ConfigError("HSIC needs two square matrices of equal size, got " +
                      shape_str(k.shape()) + " and " + shape_str(l.shape()));
  }
}

// A Gram matrix prepared for one estimator: double-centered for the biased
// form; zero-diagonal with row sums and total for the unbiased form.
struct PreparedGram {
  Estimator estimator;
  std::size_t m = 0;
  RowMatrix g;
  Eigen::VectorXd row_sums;
  Eigen::RowVectorXd col_sums;
  double total = 0.0;
  double scale = 0.0;  // (tr(K) / m)^2
};

PreparedGram prepare(const Tensor& k, Estimator estimator) {
  const std::size_t m = k.dim(0);
  if (estimator == Estimator::kBiased && m < 2) {
    throw DomainError("biased HSIC needs m >= 2, got " + std::to_string(m));
  }
  if (estimator == Estimator::kUnbiased && m < 4) {
    throw DomainError("unbiased HSIC needs m >= 4, got " + std::to_string(m));
  }
  PreparedGram p;
  p.estimator = estimator;
  p.m = m;
  auto km = as_matrix(k, "Gram matrix");
  const double mean_diag = km.diagonal().sum() / static_cast<double>(m);
  p.scale = mean_diag * mean_diag;
  if (estimator == Estimator::kBiased) {
    const Eigen::RowVectorXd col_mean = km.colwise().mean();
    const Eigen::VectorXd row_mean = km.rowwise().mean();
    const double grand = row_mean.mean();
    p.g = km;
    p.g.rowwise() -= col_mean;
    p.g.colwise() -= row_mean;
    p.g.array() += grand;
  } else {
    p.g = km;
    p.g.diagonal().setZero();
    p.row_sums = p.g.rowwise().sum();
    p.col_sums = p.g.colwise().sum();
    p.total = p.row_sums.sum();
  }
  return p;
}

double hsic_prepared(const PreparedGram& a, const PreparedGram& b) {
  const double m = static_cast<double>(a.m);
  // Elementwise product against the transpose gives tr(A B) exactly.
  const double trace = (a.g.array() * b.g.transpose().array()).sum();
  if (a.estimator == Estimator::kBiased) return trace / ((m - 1) * (m - 1));
  // 1^T A B 1 = (A^T 1) . (B 1).
  const double cross = a.col_sums.dot(b.row_sums);
  return (trace + a.total * b.total / ((m - 1) * (m - 2)) - 2.0 / (m - 2) * cross) /
         (m * (m - 3));
}

std::optional<double> ratio(double xy, double xx, double yy, double scale_x,
                            double scale_y) {
  if (!(xx > kUndefinedRelTol * scale_x) || !(yy > kUndefinedRelTol * scale_y)) {
    return std::nullopt;
  }
  return xy / std::sqrt(xx * yy);
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Tensor rows_of(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t d = x.dim(1);
  Tensor out({count, d});
  std::copy_n(x.raw() + begin * d, count * d, out.raw());
  return out;
}

Tensor columns_of(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.raw() + i * d + begin, count, out.raw() + i * count);
  }
  return out;
}

nlohmann::json tap_json(const TapInfo& t) {
  return {{"name", t.name}, {"kind", t.kind}, {"stage", t.stage}, {"block", t.block}};
}

TapInfo tap_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.at("kind").get<std::string>(),
          j.at("stage").get<int>(), j.at("block").get<int>()};
}

}  // namespace

std::size_t worker_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPIKESCOPE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ConfigError(std::string("SPIKESCOPE_THREADS must be a positive integer, got '") +
                      env + "'");
  }
  return 1;
}

// ---- Recording -------------------------------------------------------------

std::vector<std::size_t> select_examples(std::size_t dataset_size, std::size_t n,
                                         std::uint64_t seed) {
  if (n > dataset_size) {
    throw ConfigError("requested " + std::to_string(n) + " examples from a split of " +
                      std::to_string(dataset_size));
  }
  std::vector<std::size_t> ids(dataset_size);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(Rng::derive(seed, "cka.subset"));
  rng.shuffle(std::span<std::size_t>(ids));
  ids.resize(n);
  return ids;
}

std::vector<ActivationRecord> record_activations(Network& net, const ImageDataset& data,
                                                 const RecordOptions& options) {
  const auto ids = select_examples(data.size(), options.n_examples, options.seed);
  return record_activations(net, data, ids, options);
}

std::vector<ActivationRecord> record_activations(Network& net, const ImageDataset& data,
                                                 std::span<const std::size_t> ids,
                                                 const RecordOptions& options) {
  if (ids.empty()) throw ConfigError("no examples selected for recording");
  const std::size_t steps = net.input_time_steps();
  auto wanted = [&](const TapInfo& t) {
    return options.kinds.empty() ||
           std::find(options.kinds.begin(), options.kinds.end(), t.kind) !=
               options.kinds.end();
  };

  // Probe pass on one example to learn each tap's width and time steps.
  struct Plan {
    std::size_t time_steps = 1;
    std::size_t per_step = 0;
    std::vector<std::size_t> columns;  // empty: keep all
  };
  std::vector<ActivationRecord> records;
  std::map<std::string, std::size_t> index;
  std::vector<Plan> plans;
  {
    const std::size_t first = ids[0];
    TapSink probe = [&](const TapInfo& info, const Tensor& out, std::size_t t) {
      if (!wanted(info)) return;
      index[info.name] = records.size();
      ActivationRecord r;
      r.layer = info;
      r.time_steps = t;
      records.push_back(std::move(r));
      plans.push_back({t, out.numel() / t, {}});
    };
    net.forward(encode_examples(data, std::span(&first, 1), steps), false, &probe);
  }

  std::size_t total_bytes = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    Plan& plan = plans[r];
    ActivationRecord& rec = records[r];
    rec.source_width = plan.per_step;
    const std::size_t width = plan.time_steps * plan.per_step;
    if (width > options.feature_budget) {
      if (!options.subsample) {
        throw ConfigError("layer '" + rec.layer.name + "' has " + std::to_string(width) +
                          " features, over the budget of " +
                          std::to_string(options.feature_budget) +
                          "; enable feature subsampling or raise the budget");
      }
      const std::size_t keep = std::max<std::size_t>(1, options.feature_budget / plan.time_steps);
      std::vector<std::size_t> cols(plan.per_step);
      std::iota(cols.begin(), cols.end(), 0);
      rec.subsample_seed = Rng::derive(options.seed, "cka.columns." + rec.layer.name);
      Rng rng(rec.subsample_seed);
      rng.shuffle(std::span<std::size_t>(cols));
      cols.resize(keep);
      std::sort(cols.begin(), cols.end());
      plan.columns = std::move(cols);
      rec.subsampled = true;
    }
    const std::size_t kept = plan.columns.empty() ? plan.per_step : plan.columns.size();
    total_bytes += ids.size() * plan.time_steps * kept * sizeof(double);
  }
  if (total_bytes > options.memory_budget_bytes) {
    throw ConfigError("recording needs " + std::to_string(total_bytes) +
                      " bytes, over the memory budget of " +
                      std::to_string(options.memory_budget_bytes) +
                      "; enable feature subsampling or record fewer examples");
  }
  for (std::size_t r = 0; r < records.size(); ++r) {
    const Plan& plan = plans[r];
    const std::size_t kept = plan.columns.empty() ? plan.per_step : plan.columns.size();
    records[r].features = Tensor({ids.size(), plan.time_steps * kept});
    records[r].example_ids.assign(ids.begin(), ids.end());
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t lo = 0; lo < ids.size(); lo += batch) {
    const std::size_t n = std::min(batch, ids.size() - lo);
    TapSink sink = [&](const TapInfo& info, const Tensor& out, std::size_t t) {
      auto it = index.find(info.name);
      if (it == index.end()) return;
      const Plan& plan = plans[it->second];
      Tensor& feats = records[it->second].features;
      if (t != plan.time_steps || out.numel() != t * n * plan.per_step) {
        throw InternalError("tap '" + info.name + "' changed shape between batches");
      }
      const std::size_t kept = plan.columns.empty() ? plan.per_step : plan.columns.size();
      const std::size_t width = feats.dim(1);
      for (std::size_t step = 0; step < t; ++step) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = out.raw() + (step * n + i) * plan.per_step;
          double* dst = feats.raw() + (lo + i) * width + step * kept;
          if (plan.columns.empty()) {
            std::copy_n(src, kept, dst);
          } else {
            for (std::size_t c = 0; c < kept; ++c) dst[c] = src[plan.columns[c]];
          }
        }
      }
    };
    net.forward(encode_examples(data, ids.subspan(lo, n), steps), false, &sink);
  }
  return records;
}

void save_records(const std::string& dir, const std::vector<ActivationRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string file = std::to_string(i) + "_" + r.layer.name + ".spkt";
    save_tensor((fs::path(dir) / file).string(), r.features);
    index.push_back({{"layer", tap_json(r.layer)},
                     {"file", file},
                     {"time_steps", r.time_steps},
                     {"examples", r.examples()},
                     {"width", r.width()},
                     {"source_width", r.source_width},
                     {"subsampled", r.subsampled},
                     {"subsample_seed", r.subsample_seed}});
  }
  nlohmann::json manifest = {{"records", index},
                             {"example_ids", records.empty()
                                                 ? std::vector<std::size_t>{}
                                                 : records[0].example_ids}};
  std::ofstream out(fs::path(dir) / "records.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write record manifest in " + dir);
}

// ---- Estimators ------------------------------------------------------------

std::string to_string(Estimator e) {
  return e == Estimator::kBiased ? "biased" : "unbiased";
}

Estimator parse_estimator(const std::string& s) {
  if (s == "biased") return Estimator::kBiased;
  if (s == "unbiased") return Estimator::kUnbiased;
  throw ConfigError("unknown estimator '" + s + "' (expected biased or unbiased)");
}

Tensor gram_linear(const Tensor& x) {
  auto xm = as_matrix(x, "features");
  const std::size_t m = x.dim(0);
  Tensor k({m, m});
  Eigen::Map<RowMatrix> km(k.raw(), m, m);
  // Fill the lower triangle and mirror it so K is exactly symmetric.
  km.setZero();
  km.selfadjointView<Eigen::Lower>().rankUpdate(xm);
  km.triangularView<Eigen::StrictlyUpper>() = km.transpose();
  return k;
}

double hsic_biased(const Tensor& k, const Tensor& l) {
  require_square_pair(k, l);
  return hsic_prepared(prepare(k, Estimator::kBiased), prepare(l, Estimator::kBiased));
}

double hsic_unbiased(const Tensor& k, const Tensor& l) {
  require_square_pair(k, l);
  return hsic_prepared(prepare(k, Estimator::kUnbiased),
                       prepare(l, Estimator::kUnbiased));
}

std::optional<double> cka(const Tensor& x, const Tensor& y, Estimator estimator) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0)) {
    throw ConfigError("CKA needs feature matrices with equal example counts, got " +
                      shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  MinibatchCka acc(estimator);
  acc.add(x, y);
  return acc.value();
}

void MinibatchCka::add(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0)) {
    throw ConfigError("CKA batch needs equal example counts, got " +
                      shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  add_grams(gram_linear(x), gram_linear(y));
}

void MinibatchCka::add_grams(const Tensor& k, const Tensor& l) {
  require_square_pair(k, l);
  const std::size_t m = k.dim(0);
  if (batches_ > 0 && m != batch_size_) {
    throw ConfigError("minibatch CKA batch of " + std::to_string(m) +
                      " examples after batches of " + std::to_string(batch_size_));
  }
  batch_size_ = m;
  const PreparedGram pk = prepare(k, estimator_);
  const PreparedGram pl = prepare(l, estimator_);
  xy_ += hsic_prepared(pk, pl);
  xx_ += hsic_prepared(pk, pk);
  yy_ += hsic_prepared(pl, pl);
  scale_x_ += pk.scale;
  scale_y_ += pl.scale;
  ++batches_;
}

std::optional<double> MinibatchCka::value() const {
  if (batches_ == 0) return std::nullopt;
  const double n = static_cast<double>(batches_);
  return ratio(xy_ / n, xx_ / n, yy_ / n, scale_x_ / n, scale_y_ / n);
}

std::optional<double> cka_minibatch(std::span<const Tensor> xs,
                                    std::span<const Tensor> ys,
                                    Estimator estimator) {
  if (xs.size() != ys.size()) {
    throw ConfigError("minibatch CKA needs paired batches");
  }
  MinibatchCka acc(estimator);
  for (std::size_t i = 0; i < xs.size(); ++i) acc.add(xs[i], ys[i]);
  return acc.value();
}

// ---- Heatmaps --------------------------------------------------------------

CkaHeatmap cross_layer_heatmap(const std::vector<ActivationRecord>& a,
                               const std::vector<ActivationRecord>& b,
                               const HeatmapOptions& options) {
  CkaHeatmap out;
  out.estimator = options.estimator;
  for (const auto& r : a) out.rows.push_back(r.layer);
  for (const auto& r : b) out.cols.push_back(r.layer);
  if (a.empty() || b.empty()) return out;

  const auto& ref_ids = a[0].example_ids;
  const std::size_t m = a[0].examples();
  auto check = [&](const ActivationRecord& r) {
    if (r.examples() != m || r.example_ids != ref_ids) {
      throw ConfigError("example order mismatch at layer '" + r.layer.name +
                        "': records must cover identical examples in identical order");
    }
  };
  for (const auto& r : a) check(r);
  for (const auto& r : b) check(r);

  const std::size_t bs = options.batch_size == 0 || m <= options.batch_size
                             ? m
                             : options.batch_size;
  const std::size_t batches = m / bs;
  out.examples = batches * bs;
  out.batch_size = bs;
  const bool same = &a == &b;
  const std::size_t threads = worker_threads(options.threads);
  const std::size_t ra = a.size(), rb = b.size();

  std::vector<double> xy(ra * rb, 0.0), xx(ra, 0.0), yy(rb, 0.0);
  std::vector<double> sx(ra, 0.0), sy(rb, 0.0);
  std::vector<PreparedGram> ga(ra), gb(same ? 0 : rb);
  for (std::size_t batch = 0; batch < batches; ++batch) {
    const std::size_t lo = batch * bs;
    parallel_for(ra, threads, [&](std::size_t i) {
      ga[i] = prepare(gram_linear(rows_of(a[i].features, lo, bs)), options.estimator);
      xx[i] += hsic_prepared(ga[i], ga[i]);
      sx[i] += ga[i].scale;
    });
    if (!same) {
      parallel_for(rb, threads, [&](std::size_t j) {
        gb[j] = prepare(gram_linear(rows_of(b[j].features, lo, bs)), options.estimator);
        yy[j] += hsic_prepared(gb[j], gb[j]);
        sy[j] += gb[j].scale;
      });
    }
    const auto& gcols = same ? ga : gb;
    parallel_for(ra * rb, threads, [&](std::size_t cell) {
      xy[cell] += hsic_prepared(ga[cell / rb], gcols[cell % rb]);
    });
  }
  if (same) {
    yy = xx;
    sy = sx;
  }
  const double n = static_cast<double>(batches);
  out.values.resize(ra * rb);
  for (std::size_t i = 0; i < ra; ++i) {
    for (std::size_t j = 0; j < rb; ++j) {
      out.values[i * rb + j] =
          ratio(xy[i * rb + j] / n, xx[i] / n, yy[j] / n, sx[i] / n, sy[j] / n);
    }
  }
  return out;
}

nlohmann::json to_json(const CkaHeatmap& h) {
  nlohmann::json rows = nlohmann::json::array(), cols = nlohmann::json::array();
  for (const auto& r : h.rows) rows.push_back(tap_json(r));
  for (const auto& c : h.cols) cols.push_back(tap_json(c));
  nlohmann::json values = nlohmann::json::array();
  for (const auto& v : h.values) values.push_back(v ? nlohmann::json(*v) : nlohmann::json());
  return {{"estimator", to_string(h.estimator)},
          {"examples", h.examples},
          {"batch_size", h.batch_size},
          {"shape", {h.rows.size(), h.cols.size()}},
          {"rows", rows},
          {"cols", cols},
          {"values", values}};
}

CkaHeatmap heatmap_from_json(const nlohmann::json& j) {
  CkaHeatmap h;
  h.estimator = parse_estimator(j.at("estimator").get<std::string>());
  h.examples = j.at("examples").get<std::size_t>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  for (const auto& r : j.at("rows")) h.rows.push_back(tap_from_json(r));
  for (const auto& c : j.at("cols")) h.cols.push_back(tap_from_json(c));
  for (const auto& v : j.at("values")) {
    h.values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  if (h.values.size() != h.rows.size() * h.cols.size()) {
    throw FormatError("heatmap has " + std::to_string(h.values.size()) +
                      " values for a " + std::to_string(h.rows.size()) + "x" +
                      std::to_string(h.cols.size()) + " grid");
  }
  return h;
}

std::string heatmap_csv(const CkaHeatmap& h) {
  std::ostringstream out;
  out.precision(17);
  out << "layer";
  for (const auto& c : h.cols) out << ',' << c.name;
  out << '\n';
  for (std::size_t i = 0; i < h.rows.size(); ++i) {
    out << h.rows[i].name;
    for (std::size_t j = 0; j < h.cols.size(); ++j) {
      out << ',';
      if (const auto v = h.at(i, j)) out << *v;
    }
    out << '\n';
  }
  return out.str();
}

std::string heatmap_pgm(const CkaHeatmap& h, std::size_t cell_pixels) {
  cell_pixels = std::max<std::size_t>(cell_pixels, 1);
  const std::size_t width = h.cols.size() * cell_pixels;
  const std::size_t height = h.rows.size() * cell_pixels;
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) +
                    "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const auto v = h.at(y / cell_pixels, x / cell_pixels);
      const int level =
          v ? 1 + static_cast<int>(std::lround(std::clamp(*v, 0.0, 1.0) * 254.0)) : 0;
      out.push_back(static_cast<char>(level));
    }
  }
  return out;
}

std::vector<CurvePoint> diagonal_curve(const CkaHeatmap& h) {
  if (h.rows.size() != h.cols.size()) {
    throw ConfigError("diagonal needs a square heatmap, got " +
                      std::to_string(h.rows.size()) + "x" + std::to_string(h.cols.size()));
  }
  std::vector<CurvePoint> curve;
  for (std::size_t i = 0; i < h.rows.size(); ++i) {
    if (h.rows[i].name != h.cols[i].name) {
      throw ConfigError("diagonal needs matching layers, row " + std::to_string(i) +
                        " is '" + h.rows[i].name + "' but column is '" +
                        h.cols[i].name + "'");
    }
    curve.push_back({h.rows[i], h.at(i, i)});
  }
  return curve;
}

nlohmann::json to_json(const std::vector<CurvePoint>& curve) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : curve) {
    nlohmann::json e = tap_json(p.layer);
    e["value"] = p.value ? nlohmann::json(*p.value) : nlohmann::json();
    out.push_back(std::move(e));
  }
  return out;
}

Tensor cross_time_heatmap(const ActivationRecord& record, std::size_t time_steps,
                          Estimator estimator) {
  if (time_steps == 0 || record.width() % time_steps != 0) {
    throw ConfigError("record '" + record.layer.name + "' width " +
                      std::to_string(record.width()) + " is not divisible by " +
                      std::to_string(time_steps) + " time steps");
  }
  const std::size_t p = record.width() / time_steps;
  std::vector<PreparedGram> grams(time_steps);
  std::vector<double> self(time_steps);
  for (std::size_t t = 0; t < time_steps; ++t) {
    grams[t] = prepare(gram_linear(columns_of(record.features, t * p, p)), estimator);
    self[t] = hsic_prepared(grams[t], grams[t]);
  }
  Tensor out({time_steps, time_steps});
  for (std::size_t i = 0; i < time_steps; ++i) {
    for (std::size_t j = 0; j < time_steps; ++j) {
      const double xy = i == j ? self[i] : hsic_prepared(grams[i], grams[j]);
      const auto v = ratio(xy, self[i], self[j], grams[i].scale, grams[j].scale);
      out.at(i, j) = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

nlohmann::json cross_time_to_json(const TapInfo& layer, const Tensor& heatmap) {
  nlohmann::json values = nlohmann::json::array();
  for (double v : heatmap.values()) {
    values.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  }
  return {{"layer", tap_json(layer)},
          {"shape", {heatmap.dim(0), heatmap.dim(1)}},
          {"values", values}};
}

}  // namespace spikescope
