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

// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-10 gate the
// exit code; 11 is an optional long run and is reported as skipped.
//
// Usage: spikescope_acceptance [work_dir [criterion ...]]
// Listing criteria runs only those (7 and 9 reuse the models trained by 6).

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles/naive.h"
#include "oracles/toy_snn.h"
#include "spikescope/cka.h"
#include "spikescope/experiment.h"
#include "spikescope/lif.h"
#include "spikescope/ops.h"
#include "spikescope/tensor.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spikescope;

struct Outcome {
  bool passed = true;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

void require(Outcome& o, bool condition, const std::string& what) {
  if (!condition && o.passed) {
    o.passed = false;
    o.detail = what;
  }
}

// ---- 1. Spiking gradient oracle ----------------------------------------

Outcome snn_gradient_oracle() {
  Outcome o;
  Rng rng(101);
  double worst = 0.0;
  int nonzero = 0;
  for (int i = 0; i < 200; ++i) {
    const oracle::ToySnn net = oracle::random_toy_snn(rng);
    const oracle::ToyGrads lib = oracle::library_gradients(net);
    const double d = oracle::max_gradient_difference(lib, oracle::tape_gradients(net));
    worst = std::max(worst, d);
    if (max_abs_diff(lib.input, Tensor::zeros_like(lib.input)) > 0) ++nonzero;
    require(o, d < 1e-10, "network " + std::to_string(i) + " differs by " + num(d));
  }
  if (o.passed) {
    o.detail = "200 networks (" + std::to_string(nonzero) +
               " with nonzero input gradient), max |diff| " + num(worst);
  }
  return o;
}

// ---- 2. Finite-difference checks of smooth kernels ---------------------

// L = sum(c * f()); checks d L / d x[i] for one random coordinate.
double fd_probe(const std::function<Tensor()>& f, const Tensor& c, Tensor& x,
                const Tensor& analytic, Rng& rng) {
  const std::size_t i = rng.below(x.numel());
  auto loss = [&] {
    const Tensor y = f();
    double s = 0.0;
    for (std::size_t k = 0; k < y.numel(); ++k) s += c[k] * y[k];
    return s;
  };
  const double numeric = oracle::central_difference(loss, x[i]);
  return oracle::relative_error(analytic[i], numeric);
}

Outcome ann_gradient_oracle() {
  Outcome o;
  Rng rng(202);
  double worst = 0.0;
  auto note = [&](const std::string& kernel, int probe, double err) {
    worst = std::max(worst, err);
    require(o, err < 1e-6, kernel + " probe " + std::to_string(probe) + " rel err " + num(err));
  };
  for (int p = 0; p < 100; ++p) {
    // conv2d
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3), f = 1 + rng.below(3);
    const std::size_t k = 1 + 2 * rng.below(2), h = k + rng.below(5);
    const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
    Tensor x = random_normal({n, c, h, h}, rng);
    Tensor w = random_normal({f, c, k, k}, rng);
    Tensor bias = random_normal({f}, rng);
    const Tensor y = conv2d(x, w, &bias, stride, pad);
    const Tensor g = random_normal(y.shape(), rng);
    const Conv2dGrads cg = conv2d_backward(g, x, w, stride, pad);
    auto conv = [&] { return conv2d(x, w, &bias, stride, pad); };
    note("conv2d/x", p, fd_probe(conv, g, x, cg.grad_x, rng));
    note("conv2d/w", p, fd_probe(conv, g, w, cg.grad_w, rng));
    note("conv2d/bias", p, fd_probe(conv, g, bias, cg.grad_bias, rng));

    // matmul and linear
    const std::size_t r = 1 + rng.below(5), m = 1 + rng.below(5), q = 1 + rng.below(5);
    Tensor a = random_normal({r, m}, rng), b = random_normal({m, q}, rng);
    const Tensor gm = random_normal({r, q}, rng);
    const MatmulGrads mg = matmul_backward(gm, a, b);
    auto mm = [&] { return matmul(a, b); };
    note("matmul/a", p, fd_probe(mm, gm, a, mg.grad_a, rng));
    note("matmul/b", p, fd_probe(mm, gm, b, mg.grad_b, rng));
    Tensor lw = random_normal({q, m}, rng), lb = random_normal({q}, rng);
    const LinearGrads lg = linear_backward(gm, a, lw);
    auto lin = [&] { return linear(a, lw, &lb); };
    note("linear/x", p, fd_probe(lin, gm, a, lg.grad_x, rng));
    note("linear/w", p, fd_probe(lin, gm, lw, lg.grad_w, rng));
    note("linear/bias", p, fd_probe(lin, gm, lb, lg.grad_bias, rng));

    // batch norm, training statistics. With two elements per channel the
    // normalized output is +-1 up to eps and the gradient is eps-sized, so
    // every channel gets at least 8 elements.
    const std::size_t bn_n = 2 + rng.below(3), bn_c = 1 + rng.below(3), bn_h = 2 + rng.below(2);
    Tensor bx = random_normal({bn_n, bn_c, bn_h, bn_h}, rng);
    Tensor gamma = random_uniform({bn_c}, rng, 0.5, 1.5), beta = random_normal({bn_c}, rng);
    BatchNormCache cache;
    batch_norm_forward(bx, gamma, beta, 1e-5, &cache);
    const Tensor gb = random_normal(bx.shape(), rng);
    const BatchNormGrads bg = batch_norm_backward(gb, gamma, cache);
    auto bn = [&] {
      BatchNormCache scratch;
      return batch_norm_forward(bx, gamma, beta, 1e-5, &scratch);
    };
    note("batch_norm/x", p, fd_probe(bn, gb, bx, bg.grad_x, rng));
    note("batch_norm/gamma", p, fd_probe(bn, gb, gamma, bg.grad_gamma, rng));
    note("batch_norm/beta", p, fd_probe(bn, gb, beta, bg.grad_beta, rng));

    // pooling
    const int kernel = 1 + static_cast<int>(rng.below(2));
    const std::size_t ph = static_cast<std::size_t>(kernel) * (1 + rng.below(3));
    Tensor px = random_normal({1 + rng.below(2), 1 + rng.below(3), ph, ph}, rng);
    const Tensor py = avg_pool2d(px, kernel);
    const Tensor gp = random_normal(py.shape(), rng);
    const Tensor pg = avg_pool2d_backward(gp, px.shape(), kernel);
    note("avg_pool2d", p, fd_probe([&] { return avg_pool2d(px, kernel); }, gp, px, pg, rng));
    const Tensor gy = global_avg_pool(px);
    const Tensor gg = random_normal(gy.shape(), rng);
    const Tensor ggx = global_avg_pool_backward(gg, px.shape());
    note("global_avg_pool", p, fd_probe([&] { return global_avg_pool(px); }, gg, px, ggx, rng));
  }
  if (o.passed) o.detail = "100 probes per kernel, max rel err " + num(worst);
  return o;
}

// ---- 3. HSIC oracles ---------------------------------------------------

oracle::Matrix to_matrix(const Tensor& t) {
  oracle::Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

Tensor features(std::size_t m, std::size_t d, Rng& rng) {
  return random_normal({m, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
}

Outcome hsic_oracles() {
  Outcome o;
  Rng rng(303);
  double worst_b = 0.0, worst_u = 0.0;
  for (std::size_t m = 2; m <= 16; ++m) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor k = gram_linear(features(m, 1 + rng.below(12), rng));
      const Tensor l = gram_linear(features(m, 1 + rng.below(12), rng));
      const double d = std::abs(hsic_biased(k, l) - oracle::hsic_biased(to_matrix(k), to_matrix(l)));
      worst_b = std::max(worst_b, d);
      require(o, d < 1e-12, "biased m=" + std::to_string(m) + " diff " + num(d));
    }
  }
  for (std::size_t m = 4; m <= 8; ++m) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor k = gram_linear(features(m, 1 + rng.below(12), rng));
      const Tensor l = gram_linear(features(m, 1 + rng.below(12), rng));
      const double d =
          std::abs(hsic_unbiased(k, l) - oracle::hsic_u_statistic(to_matrix(k), to_matrix(l)));
      worst_u = std::max(worst_u, d);
      require(o, d < 1e-10, "unbiased m=" + std::to_string(m) + " diff " + num(d));
    }
  }
  int independent = 0;
  double worst_cka = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(Rng::derive(seed, "independence"));
    const Tensor x = random_normal({2000, 64}, r);
    const Tensor y = random_normal({2000, 64}, r);
    const double v = cka(x, y, Estimator::kUnbiased).value();
    worst_cka = std::max(worst_cka, std::abs(v));
    if (std::abs(v) < 0.05) ++independent;
  }
  require(o, independent >= 47, "independence " + std::to_string(independent) + "/50");
  if (o.passed) {
    o.detail = "biased max diff " + num(worst_b) + ", unbiased max diff " + num(worst_u) +
               ", independence " + std::to_string(independent) + "/50 (max |cka| " +
               num(worst_cka) + ")";
  }
  return o;
}

// ---- 4. CKA invariances ------------------------------------------------

Tensor times(const Tensor& x, const Eigen::MatrixXd& q) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  Eigen::MatrixXd a(m, d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = x.at(i, j);
  const Eigen::MatrixXd b = a * q;
  Tensor out({m, static_cast<std::size_t>(b.cols())});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < out.dim(1); ++j) out.at(i, j) = b(i, j);
  return out;
}

Eigen::MatrixXd random_orthogonal(std::size_t d, Rng& rng) {
  Eigen::MatrixXd g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal();
  return Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
}

Tensor correlated(const Tensor& x, std::size_t d_out, double noise, Rng& rng) {
  Eigen::MatrixXd a(x.dim(1), d_out);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  Tensor y = times(x, a);
  for (double& v : y.values()) v += noise * rng.normal();
  return y;
}

Outcome cka_invariances() {
  Outcome o;
  Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 32 + rng.below(64), d = 4 + rng.below(20);
    const Tensor x = random_normal({m, d}, rng);
    const Tensor y = correlated(x, 3 + rng.below(10), 1.0, rng);
    require(o, std::abs(cka(x, x, Estimator::kBiased).value() - 1.0) < 1e-12, "CKA(X,X) != 1");
    for (Estimator e : {Estimator::kBiased, Estimator::kUnbiased}) {
      const double base = cka(x, y, e).value();
      for (double c : {1e-3, 1.0, 1e3}) {
        require(o, std::abs(cka(scale(x, c), y, e).value() - base) < 1e-9,
                "scaling by " + num(c) + " changes CKA");
      }
      const Tensor xq = times(x, random_orthogonal(d, rng));
      const Tensor yr = times(y, random_orthogonal(y.dim(1), rng));
      require(o, std::abs(cka(xq, yr, e).value() - base) < 1e-9, "orthogonal transform changes CKA");
      require(o, std::abs(cka(y, x, e).value() - base) < 1e-12, "CKA not symmetric");
      MinibatchCka single(e);
      single.add(x, y);
      require(o, single.value().value() == base, "single-batch minibatch CKA differs");
    }
  }
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(Rng::derive(seed, "minibatch"));
    const Tensor x = random_normal({4096, 32}, r);
    const Tensor y = correlated(x, 24, 4.0, r);
    const double full = cka(x, y, Estimator::kUnbiased).value();
    MinibatchCka acc;
    for (std::size_t b = 0; b < 16; ++b) {
      std::vector<double> xs(x.storage().begin() + b * 256 * 32,
                             x.storage().begin() + (b + 1) * 256 * 32);
      std::vector<double> ys(y.storage().begin() + b * 256 * 24,
                             y.storage().begin() + (b + 1) * 256 * 24);
      acc.add(Tensor({256, 32}, xs), Tensor({256, 24}, ys));
    }
    const double d = std::abs(acc.value().value() - full);
    worst = std::max(worst, d);
    require(o, d < 0.02, "16x256 minibatch vs full differs by " + num(d) + " (seed " +
                             std::to_string(seed) + ")");
  }
  if (o.passed) o.detail = "max minibatch/full gap " + num(worst);
  return o;
}

// ---- 5. LIF dynamics ---------------------------------------------------

Outcome lif_dynamics() {
  Outcome o;
  const LIFConfig cfg;
  {
    const LIFResult r = lif_forward(Tensor({1, 1}, {1.2}), cfg);
    require(o, r.spikes[0] == 1.0 && r.state.u[0] == 0.0, "trace [1.2]");
  }
  {
    const LIFResult r = lif_forward(Tensor({2, 1}, {0.6, 0.8}), cfg);
    require(o, r.spikes[0] == 0.0 && r.spikes[1] == 1.0 && r.state.saved_u[0] == 0.6 &&
                   r.state.saved_upre[1] == 0.5 * 0.6 + 0.8 && r.state.u[0] == 0.0,
            "trace [0.6, 0.8]");
  }
  {
    const LIFResult r = lif_forward(Tensor({5, 3}), cfg);
    require(o, sum(r.spikes) == 0.0 && sum(r.state.saved_u) == 0.0, "zero input trace");
  }
  Rng rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    LIFConfig c;
    c.tau = rng.uniform(0.05, 0.95);
    c.v_th = rng.uniform(0.2, 2.0);
    const std::size_t t = 1 + rng.below(8), n = 1 + rng.below(16);
    const Tensor in = random_normal({t, n}, rng, 1.5);
    const LIFResult r = lif_forward(in, c);
    for (std::size_t i = 0; i < r.spikes.numel(); ++i) {
      require(o, r.spikes[i] == 0.0 || r.spikes[i] == 1.0, "non-binary spike");
      if (r.spikes[i] == 1.0) require(o, r.state.saved_u[i] == 0.0, "no reset after spike");
    }
    // Leak: one sub-threshold kick, then silence.
    Tensor kick({t + 1, n});
    std::vector<double> u0(n);
    for (std::size_t j = 0; j < n; ++j) kick[j] = u0[j] = rng.uniform(-c.v_th, c.v_th);
    const LIFResult leak = lif_forward(kick, c);
    std::vector<double> expect = u0;
    for (std::size_t s = 1; s <= t; ++s) {
      for (std::size_t j = 0; j < n; ++j) {
        expect[j] *= c.tau;
        require(o, leak.state.saved_u[s * n + j] == expect[j], "leak decay differs from tau^t");
      }
    }
  }
  if (o.passed) o.detail = "3 hand traces, 50 randomized property checks";
  return o;
}

// ---- Trend runs --------------------------------------------------------

json trend_config(std::uint64_t seed, const fs::path& out) {
  json c = default_config();
  c["seed"] = seed;
  c["output_dir"] = out.string();
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

struct SeedRun {
  fs::path snn;
  double block_out = 0.0, conv = 0.0;
  double stage1 = 0.0, stage3 = 0.0;
  bool ok = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print(int id, const std::string& title, const Outcome& o, double secs) {
  std::cout << "criterion " << std::setw(2) << id << " " << (o.passed ? "PASS" : "FAIL")
            << "  " << title << " (" << num(secs, 3) << " s): " << o.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
  fs::remove_all(work);
  fs::create_directories(work);
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::stoi(argv[i]));
  bool all = true;
  auto gate = [&](int id, const std::string& title, double limit,
                  const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) {
      std::cout << "criterion " << std::setw(2) << id << " SKIP  " << title
                << " (not selected)" << std::endl;
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (limit > 0 && secs > limit) {
      o.passed = false;
      o.detail += "; runtime exceeds " + num(limit) + " s";
    }
    print(id, title, o, secs);
    all = all && o.passed;
  };

  gate(1, "spiking BPTT vs unrolled tape", 60, snn_gradient_oracle);
  gate(2, "smooth kernels vs finite differences", 120, ann_gradient_oracle);
  gate(3, "HSIC oracles and independence", 180, hsic_oracles);
  gate(4, "CKA invariances and minibatch accumulation", 120, cka_invariances);
  gate(5, "LIF dynamics", 10, lif_dynamics);

  std::vector<SeedRun> runs(3);
  gate(6, "residual restoration on the diagonal curve", 900, [&] {
    Outcome o;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const fs::path dir = work / ("trend_seed" + std::to_string(s)) / "diagonal";
      const RecipeOutcome r = run_recipe("diagonal", trend_config(s, dir));
      require(o, r.exit_code == kExitOk, "diagonal recipe gates failed for seed " + std::to_string(s));
      const json& d = r.summary.at("diagonal");
      runs[s].snn = dir / "models" / "snn.ckpt";
      runs[s].block_out = d.at("block_out_mean");
      runs[s].conv = d.at("intra_block_conv_mean");
      const double gap = runs[s].block_out - runs[s].conv;
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " block_out " +
                num(runs[s].block_out) + " conv " + num(runs[s].conv) + " gap " + num(gap);
      require(o, gap >= 0.05, "");
    }
    o.detail = detail;
    return o;
  });

  gate(7, "cross-time staticity by stage", 0, [&] {
    Outcome o;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const fs::path dir = work / ("trend_seed" + std::to_string(s)) / "cross_time";
      json cfg = trend_config(s, dir);
      cfg["models"]["a"] = runs[s].snn.string();
      const RecipeOutcome r = run_recipe("cross-time", cfg);
      require(o, r.exit_code == kExitOk, "cross-time gates failed for seed " + std::to_string(s));
      const json& m = r.summary.at("stage_mean_offdiagonal");
      const double s1 = m.at("1"), s3 = m.at("3");
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " stage1 " +
                num(s1) + " stage3 " + num(s3);
      require(o, s1 >= s3 && s1 >= 0.9, "");
    }
    o.detail = detail;
    return o;
  });

  gate(8, "reduced time steps: first stage vs last stage", 1200, [&] {
    Outcome o;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const fs::path dir = work / ("time_seed" + std::to_string(s));
      json cfg = trend_config(s, dir);
      cfg["data"]["difficulty"] = "hard";
      const RecipeOutcome r = run_recipe("time-sensitivity", cfg);
      const json& acc = r.summary.at("accuracy");
      const double full = acc.at("full"), first = acc.at("first_reduced"),
                   last = acc.at("last_reduced");
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " full " +
                num(full) + " first-drop " + num(full - first) + " last-drop " +
                num(full - last);
      require(o, full - first <= full - last, "");
    }
    o.detail = detail;
    return o;
  });

  gate(9, "adversarial sweep and clean-vs-adversarial CKA", 600, [&] {
    Outcome o;
    std::string detail;
    int snn_wins = 0;
    for (std::uint64_t s = 0; s < 3; ++s) {
      // Easy-blob pairs keep full accuracy across the whole grid, which makes the
      // drop comparison vacuous; train fresh pairs on the hard set instead.
      const fs::path dir = work / ("attack_seed" + std::to_string(s));
      json cfg = trend_config(s, dir);
      cfg["data"]["difficulty"] = "hard";
      const RecipeOutcome r = run_recipe("attack", cfg);
      require(o, r.exit_code == kExitOk, "attack gates failed for seed " + std::to_string(s));
      const auto eps = cfg["attack"]["epsilons"].get<std::vector<double>>();
      std::vector<double> positive;
      for (double e : eps) {
        if (e > 0) positive.push_back(e);
      }
      const double mid = positive[positive.size() / 2];
      double drop[2] = {0.0, 0.0};
      int idx = 0;
      for (const char* tag : {"ann", "snn"}) {
        const auto rows = read_csv(dir / (std::string("sweep_") + tag + ".csv"));
        double prev = 2.0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
          const double e = std::stod(rows[i][0]), clean = std::stod(rows[i][2]),
                       adv = std::stod(rows[i][3]);
          require(o, adv <= prev, std::string(tag) + " accuracy rises at epsilon " + num(e) +
                                      " (seed " + std::to_string(s) + ")");
          prev = adv;
          if (e == mid) drop[idx] = clean - adv;
        }
        const json curves = read_json(dir / (std::string("adv_cka_") + tag + ".json"));
        for (std::size_t k = 1; k < curves.size(); ++k) {
          const json& a = curves[k - 1].at("curve");
          const json& b = curves[k].at("curve");
          for (std::size_t l = 0; l < a.size(); ++l) {
            if (a[l]["value"].is_null() || b[l]["value"].is_null()) continue;
            const double va = a[l]["value"], vb = b[l]["value"];
            require(o, vb <= va + 0.02, std::string(tag) + " CKA at " +
                                            a[l]["name"].get<std::string>() +
                                            " rises by " + num(vb - va) + " (seed " +
                                            std::to_string(s) + ")");
          }
        }
        ++idx;
      }
      if (drop[1] <= drop[0]) ++snn_wins;
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s) + " drop@" +
                num(mid) + " ann " + num(drop[0]) + " snn " + num(drop[1]);
    }
    require(o, snn_wins >= 2, "SNN drop <= ANN drop in only " + std::to_string(snn_wins) + "/3 seeds");
    o.detail = (o.passed ? "" : o.detail + " | ") + detail;
    return o;
  });

  gate(10, "rerun determinism of every recipe", 0, [&] {
    Outcome o;
    json tiny = default_config();
    merge_config(tiny, json::parse(R"({
      "data": {"n": 320, "image_size": 8}, "train": {"epochs": 2},
      "cka": {"n": 64, "batch_size": 32},
      "attack": {"n": 32, "epsilons": [0, 0.05, 0.2]},
      "ablation": {"depths": [8]},
      "probe": {"n_train": 64, "n_test": 32, "iterations": 50},
      "init_study": {"seeds": [0, 1]}})"));
    std::size_t files = 0;
    for (const auto& recipe : recipe_names()) {
      const fs::path dir = work / "determinism" / recipe;
      json cfg = tiny;
      cfg["output_dir"] = dir.string();
      run_recipe(recipe, cfg);
      const json first = read_json(dir / "manifest.json");
      run_recipe(recipe, cfg);
      const json second = read_json(dir / "manifest.json");
      files += first.at("outputs").size();
      require(o, first == second, recipe + " manifest changed on rerun");
    }
    if (o.passed) {
      o.detail = std::to_string(recipe_names().size()) + " recipes, " + std::to_string(files) +
                 " checksummed outputs identical";
    }
    return o;
  });

  std::cout << "criterion 11 SKIP  spiking ResNet-20 on CIFAR-10, 300 epochs (optional, "
               "non-gating; overnight run, see README)"
            << std::endl;
  std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << std::endl;
  return all ? 0 : 1;
}
