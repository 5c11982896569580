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


#include <cmath>

#include "doctest.h"
#include "oracles/naive.h"
#include "spikescope/errors.h"
#include "spikescope/ops.h"

using namespace spikescope;

namespace {

double probe_error(const std::function<Tensor()>& f, const Tensor& c, Tensor& x,
                   const Tensor& analytic, std::size_t i) {
  auto loss = [&] {
    const Tensor y = f();
    double s = 0.0;
    for (std::size_t k = 0; k < y.numel(); ++k) s += c[k] * y[k];
    return s;
  };
  return oracle::relative_error(analytic[i], oracle::central_difference(loss, x[i]));
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("conv2d of ones sums the window") {
  const Tensor x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, nullptr, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("centered delta kernel is the identity") {
  Rng r(1);
  const Tensor x = random_normal({2, 1, 5, 6}, r);
  Tensor w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  CHECK(conv2d(x, w, nullptr, 1, 1).bitwise_equal(x));
}

TEST_CASE("conv2d matches a six-loop convolution") {
  Rng r(2);
  const Tensor x = random_normal({2, 3, 8, 8}, r), w = random_normal({4, 3, 3, 3}, r);
  const Tensor y = conv2d(x, w, nullptr, 2, 1);
  std::size_t oh, ow;
  const auto ref = oracle::conv2d(x.storage(), 2, 3, 8, 8, w.storage(), 4, 3, 3, 2, 1, oh, ow);
  REQUIRE(y.shape() == Shape{2, 4, oh, ow});
  double d = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) d = std::max(d, std::abs(ref[i] - y[i]));
  CHECK(d < 1e-12);
}

TEST_CASE("optimized kernels agree with the library's reference kernels") {
  Rng r(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + r.below(3), c = 1 + r.below(4), f = 1 + r.below(4);
    const std::size_t k = 1 + 2 * r.below(2), h = k + r.below(7);
    const int stride = 1 + static_cast<int>(r.below(2)), pad = static_cast<int>(r.below(2));
    const Tensor x = random_normal({n, c, h, h + 1}, r), w = random_normal({f, c, k, k}, r);
    const Tensor b = random_normal({f}, r);
    CHECK(max_abs_diff(conv2d(x, w, &b, stride, pad),
                       reference::conv2d(x, w, &b, stride, pad)) < 1e-12);
    const Tensor a = random_normal({n + 2, c + 1}, r), m = random_normal({c + 1, f}, r);
    CHECK(max_abs_diff(matmul(a, m), reference::matmul(a, m)) < 1e-12);
    const Tensor p = random_normal({n, c, 2 * h, 2 * h}, r);
    CHECK(max_abs_diff(avg_pool2d(p, 2), reference::avg_pool2d(p, 2)) < 1e-12);
    CHECK(max_abs_diff(global_avg_pool(p), reference::global_avg_pool(p)) < 1e-12);
    const Tensor gamma = random_normal({c}, r), beta = random_normal({c}, r);
    BatchNormCache cache;
    CHECK(max_abs_diff(batch_norm_forward(p, gamma, beta, 1e-5, &cache),
                       reference::batch_norm(p, gamma, beta, 1e-5)) < 1e-12);
  }
}

TEST_CASE("stride leaves unreachable trailing rows out") {
  const Tensor x({1, 1, 4, 4}, 1.0), w({1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, nullptr, 2, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("conv2d rejects mismatched shapes") {
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), nullptr, 1, 1), ConfigError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), nullptr, 1, 0), ConfigError);
  const Tensor bias({2});
  CHECK_THROWS_AS(conv2d(Tensor({1, 1, 4, 4}), Tensor({1, 1, 3, 3}), &bias, 1, 1), ConfigError);
  CHECK_THROWS_AS(conv2d_backward(Tensor({1, 1, 3, 3}), Tensor({1, 1, 4, 4}),
                                  Tensor({1, 1, 3, 3}), 1, 1),
                  InternalError);
}

TEST_CASE("scalar kernel backward") {
  const Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  const Tensor w({1, 1, 1, 1}, {2.0});
  const Conv2dGrads g = conv2d_backward(Tensor({1, 1, 2, 2}, 1.0), x, w, 1, 0);
  CHECK(g.grad_w[0] == 10.0);
  for (double v : g.grad_x.values()) CHECK(v == 2.0);
  CHECK(g.grad_bias[0] == 4.0);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  Rng r(4);
  const Tensor x = random_normal({2, 2, 5, 5}, r), w = random_normal({3, 2, 3, 3}, r);
  const Conv2dGrads g = conv2d_backward(Tensor({2, 3, 5, 5}), x, w, 1, 1);
  for (const Tensor* t : {&g.grad_x, &g.grad_w, &g.grad_bias}) {
    for (double v : t->values()) CHECK(v == 0.0);
  }
}

TEST_CASE("conv backward matches finite differences") {
  Rng r(5);
  Tensor x = random_normal({2, 2, 6, 5}, r), w = random_normal({3, 2, 3, 3}, r);
  Tensor b = random_normal({3}, r);
  const Tensor y = conv2d(x, w, &b, 2, 1);
  const Tensor c = random_normal(y.shape(), r);
  const Conv2dGrads g = conv2d_backward(c, x, w, 2, 1);
  auto f = [&] { return conv2d(x, w, &b, 2, 1); };
  for (int i = 0; i < 20; ++i) {
    CHECK(probe_error(f, c, x, g.grad_x, r.below(x.numel())) < 1e-6);
    CHECK(probe_error(f, c, w, g.grad_w, r.below(w.numel())) < 1e-6);
  }
  CHECK(probe_error(f, c, b, g.grad_bias, 1) < 1e-6);
}

TEST_CASE("float32 GEMMs stay close to the 64-bit result") {
  Rng r(6);
  const Tensor x = random_normal({2, 4, 7, 7}, r), w = random_normal({5, 4, 3, 3}, r);
  const Tensor y64 = conv2d(x, w, nullptr, 1, 1);
  const Conv2dGrads g64 = conv2d_backward(y64, x, w, 1, 1);
  Tensor y32;
  Conv2dGrads g32;
  {
    GemmPrecisionScope scope(GemmPrecision::kFloat32);
    CHECK(gemm_precision() == GemmPrecision::kFloat32);
    y32 = conv2d(x, w, nullptr, 1, 1);
    g32 = conv2d_backward(y64, x, w, 1, 1);
  }
  CHECK(gemm_precision() == GemmPrecision::kFloat64);
  CHECK(max_abs_diff(y32, y64) < 1e-4);
  CHECK(max_abs_diff(g32.grad_w, g64.grad_w) < 1e-3);
  CHECK_FALSE(y32.bitwise_equal(y64));
}

TEST_CASE("matmul and linear backward match finite differences") {
  Rng r(7);
  Tensor a = random_normal({4, 3}, r), b = random_normal({3, 5}, r);
  const Tensor c = random_normal({4, 5}, r);
  const MatmulGrads g = matmul_backward(c, a, b);
  for (int i = 0; i < 10; ++i) {
    CHECK(probe_error([&] { return matmul(a, b); }, c, a, g.grad_a, r.below(12)) < 1e-6);
    CHECK(probe_error([&] { return matmul(a, b); }, c, b, g.grad_b, r.below(15)) < 1e-6);
  }
  Tensor w = random_normal({5, 3}, r), bias = random_normal({5}, r);
  const LinearGrads lg = linear_backward(c, a, w);
  auto lin = [&] { return linear(a, w, &bias); };
  for (int i = 0; i < 10; ++i) {
    CHECK(probe_error(lin, c, a, lg.grad_x, r.below(12)) < 1e-6);
    CHECK(probe_error(lin, c, w, lg.grad_w, r.below(15)) < 1e-6);
  }
  CHECK(probe_error(lin, c, bias, lg.grad_bias, 2) < 1e-6);
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ConfigError);
}

TEST_CASE("elementwise examples") {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  const Tensor y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
  const Tensor g = relu_backward(Tensor({3}, 1.0), x);
  CHECK(g[0] == 0.0);
  CHECK(g[2] == 1.0);
  CHECK(add(x, x)[2] == 4.0);
  CHECK(mul(x, x)[0] == 1.0);
  CHECK(scale(x, 3.0)[2] == 6.0);
  CHECK_THROWS_AS(add(x, Tensor({2})), ConfigError);
}

TEST_CASE("pooling") {
  const Tensor c({2, 3, 4, 4}, 2.5);
  const Tensor pooled = global_avg_pool(c);
  for (double v : pooled.values()) CHECK(v == 2.5);
  const Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(avg_pool2d(x, 2)[0] == 2.5);
  const Tensor g = avg_pool2d_backward(Tensor({1, 1, 1, 1}, 1.0), x.shape(), 2);
  for (double v : g.values()) CHECK(v == 0.25);
  CHECK_THROWS_AS(avg_pool2d(Tensor({1, 1, 3, 3}), 2), ConfigError);
}

TEST_CASE("batch norm statistics and finite differences") {
  Rng r(8);
  Tensor x = random_normal({4, 3, 3, 3}, r, 2.0);
  Tensor gamma({3}, 1.0), beta({3}, 0.0);
  BatchNormCache cache;
  const Tensor y = batch_norm_forward(x, gamma, beta, 1e-5, &cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) m += y[(n * 3 + c) * 9 + i];
    m /= 36.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) v += std::pow(y[(n * 3 + c) * 9 + i] - m, 2);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v / 36.0 - 1.0) < 1e-5);
  }
  gamma = random_uniform({3}, r, 0.5, 1.5);
  beta = random_normal({3}, r);
  batch_norm_forward(x, gamma, beta, 1e-5, &cache);
  const Tensor c = random_normal(x.shape(), r);
  const BatchNormGrads g = batch_norm_backward(c, gamma, cache);
  auto f = [&] {
    BatchNormCache s;
    return batch_norm_forward(x, gamma, beta, 1e-5, &s);
  };
  for (int i = 0; i < 20; ++i) CHECK(probe_error(f, c, x, g.grad_x, r.below(x.numel())) < 1e-6);
  CHECK(probe_error(f, c, gamma, g.grad_gamma, 1) < 1e-6);
  CHECK(probe_error(f, c, beta, g.grad_beta, 2) < 1e-6);
}

}  // TEST_SUITE
