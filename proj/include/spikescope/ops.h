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

#ifndef SPIKESCOPE_OPS_H_
#define SPIKESCOPE_OPS_H_

#include "spikescope/tensor.h"

namespace spikescope {

// Element type of the convolution GEMMs on the calling thread. Tensors stay
// 64-bit either way; kFloat32 rounds the GEMM operands for throughput and is
// meant for training only.
enum class GemmPrecision { kFloat64, kFloat32 };
GemmPrecision gemm_precision();

// Sets the GEMM precision for the current thread until destruction.
class GemmPrecisionScope {
 public:
  explicit GemmPrecisionScope(GemmPrecision precision);
  ~GemmPrecisionScope();
  GemmPrecisionScope(const GemmPrecisionScope&) = delete;
  GemmPrecisionScope& operator=(const GemmPrecisionScope&) = delete;

 private:
  GemmPrecision saved_;
};

// Cross-correlation with zero padding. x: [N,C,H,W], w: [F,C,kh,kw],
// bias: [F] or nullptr. Output extent is floor((H + 2*pad - kh) / stride) + 1;
// trailing input rows/columns a stride cannot reach are ignored.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad);

struct Conv2dGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_bias;  // [F]; zeros when the layer has no bias
};

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& w, int stride, int pad);

// a: [m,k], b: [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor grad_a;
  Tensor grad_b;
};
MatmulGrads matmul_backward(const Tensor& grad_out, const Tensor& a,
                            const Tensor& b);

// Fully connected layer: x [N,in], w [out,in], bias [out] -> [N,out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);
struct LinearGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_bias;
};
LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& w);

// Non-overlapping average pooling with window = stride = kernel.
Tensor avg_pool2d(const Tensor& x, int kernel);
Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape,
                           int kernel);

// [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);
// Exact subgradient 1[x > 0].
Tensor relu_backward(const Tensor& grad_out, const Tensor& x);
void add_inplace(Tensor& acc, const Tensor& x);

double sum(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Per-channel batch normalization over every axis but axis 1. The statistics
// are biased (divide by count); eps is added to the variance.
struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
  std::size_t count = 0;  // elements per channel
  bool batch_stats = true;
};
Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, double eps,
                          BatchNormCache* cache);
// Uses supplied statistics instead of batch statistics (inference mode).
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma,
                            const Tensor& beta, const Tensor& mean,
                            const Tensor& var, double eps,
                            BatchNormCache* cache);
struct BatchNormGrads {
  Tensor grad_x;
  Tensor grad_gamma;
  Tensor grad_beta;
};
BatchNormGrads batch_norm_backward(const Tensor& grad_out, const Tensor& gamma,
                                   const BatchNormCache& cache);

// Straightforward nested-loop kernels used as oracles for the optimized path.
namespace reference {
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor avg_pool2d(const Tensor& x, int kernel);
Tensor global_avg_pool(const Tensor& x);
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);
}  // namespace reference

}  // namespace spikescope

#endif  // SPIKESCOPE_OPS_H_
