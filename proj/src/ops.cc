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

#include "spikescope/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "spikescope/errors.h"

namespace spikescope {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, out_h, out_w;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, int stride,
                           int pad) {
  if (xs.size() != 4 || ws.size() != 4) {
    throw ConfigError("conv2d expects rank-4 input and kernel, got " +
                      shape_str(xs) + " and " + shape_str(ws));
  }
  if (stride < 1 || pad < 0) {
    throw ConfigError("conv2d needs stride >= 1 and pad >= 0");
  }
  if (xs[1] != ws[1]) {
    throw ConfigError("conv2d channel mismatch: input " + shape_str(xs) +
                      " kernel " + shape_str(ws));
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3],
                 static_cast<std::size_t>(stride),
                 static_cast<std::size_t>(pad), 0, 0};
  const std::size_t ph = g.h + 2 * g.pad, pw = g.w + 2 * g.pad;
  if (g.kh > ph || g.kw > pw) {
    throw ConfigError("conv2d kernel " + shape_str(ws) +
                      " larger than padded input " + shape_str(xs));
  }
  g.out_h = (ph - g.kh) / g.stride + 1;
  g.out_w = (pw - g.kw) / g.stride + 1;
  return g;
}

// Examples per im2col chunk; keeps the column buffer cache-resident (about 2 MiB).
std::size_t chunk_examples(const ConvGeometry& g) {
  const std::size_t per_example = g.patch() * g.pixels() * sizeof(double);
  const std::size_t budget = std::size_t{2} << 20;
  return std::max<std::size_t>(1, std::min(g.n, budget / std::max<std::size_t>(per_example, 1)));
}

// Output columns [lo, hi) whose input column ow*stride + k - pad is in range.
void valid_range(std::size_t k, std::size_t in, std::size_t out, std::size_t stride,
                 std::size_t pad, std::size_t& lo, std::size_t& hi) {
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  // Largest ow with ow*stride + k - pad <= in - 1.
  const long top = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  hi = top < 0 ? 0 : std::min(out, static_cast<std::size_t>(top) / stride + 1);
  if (hi < lo) hi = lo;
}

// cols: [patch, nb * pixels]
template <typename T>
void im2col(const Tensor& x, const ConvGeometry& g, std::size_t n0,
            std::size_t nb, T* cols) {
  const std::size_t width = nb * g.pixels();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t oh_lo, oh_hi;
      valid_range(ki, g.h, g.out_h, g.stride, g.pad, oh_lo, oh_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t ow_lo, ow_hi;
        valid_range(kj, g.w, g.out_w, g.stride, g.pad, ow_lo, ow_hi);
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * width;
        for (std::size_t nl = 0; nl < nb; ++nl) {
          const double* plane = x.raw() + ((n0 + nl) * g.c + c) * g.h * g.w;
          T* dst = row + nl * g.pixels();
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            T* d = dst + oh * g.out_w;
            if (oh < oh_lo || oh >= oh_hi) {
              std::fill(d, d + g.out_w, T(0));
              continue;
            }
            const double* src = plane + (oh * g.stride + ki - g.pad) * g.w;
            std::fill(d, d + ow_lo, T(0));
            if (g.stride == 1) {
              const double* s = src + kj - g.pad;
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) d[ow] = static_cast<T>(s[ow]);
            } else {
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                d[ow] = static_cast<T>(src[ow * g.stride + kj - g.pad]);
              }
            }
            std::fill(d + ow_hi, d + g.out_w, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t n0,
                std::size_t nb, Tensor& grad_x) {
  const std::size_t width = nb * g.pixels();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t oh_lo, oh_hi;
      valid_range(ki, g.h, g.out_h, g.stride, g.pad, oh_lo, oh_hi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t ow_lo, ow_hi;
        valid_range(kj, g.w, g.out_w, g.stride, g.pad, ow_lo, ow_hi);
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * width;
        for (std::size_t nl = 0; nl < nb; ++nl) {
          double* plane = grad_x.raw() + ((n0 + nl) * g.c + c) * g.h * g.w;
          const T* src = row + nl * g.pixels();
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            double* d = plane + (oh * g.stride + ki - g.pad) * g.w;
            const T* s = src + oh * g.out_w;
            if (g.stride == 1) {
              double* t = d + kj - g.pad;
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) t[ow] += s[ow];
            } else {
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                d[ow * g.stride + kj - g.pad] += s[ow];
              }
            }
          }
        }
      }
    }
  }
}

// Per-thread scratch that grows but is never re-zeroed.
template <typename T>
T* scratch(std::size_t slot, std::size_t count) {
  thread_local std::vector<T> buffers[3];
  if (buffers[slot].size() < count) buffers[slot].resize(count);
  return buffers[slot].data();
}

thread_local GemmPrecision current_precision = GemmPrecision::kFloat64;

template <typename T>
using RowMatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void conv2d_impl(const Tensor& x, const Tensor& w, const Tensor* bias,
                 const ConvGeometry& g, Tensor& out) {
  const std::size_t chunk = chunk_examples(g);
  T* cols = scratch<T>(0, g.patch() * chunk * g.pixels());
  T* product = scratch<T>(1, g.f * chunk * g.pixels());
  const RowMatT<T> wm = ConstMapMat(w.raw(), g.f, g.patch()).cast<T>();
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, g.n - n0);
    const std::size_t width = nb * g.pixels();
    im2col(x, g, n0, nb, cols);
    Eigen::Map<RowMatT<T>>(product, g.f, width).noalias() =
        wm * Eigen::Map<const RowMatT<T>>(cols, g.patch(), width);
    for (std::size_t nl = 0; nl < nb; ++nl) {
      for (std::size_t f = 0; f < g.f; ++f) {
        double* dst = out.raw() + ((n0 + nl) * g.f + f) * g.pixels();
        const T* src = product + f * width + nl * g.pixels();
        const double b = bias ? (*bias)[f] : 0.0;
        for (std::size_t p = 0; p < g.pixels(); ++p) dst[p] = src[p] + b;
      }
    }
  }
}

template <typename T>
void conv2d_backward_impl(const Tensor& grad_out, const Tensor& x, const Tensor& w,
                          const ConvGeometry& g, Conv2dGrads& grads) {
  const std::size_t chunk = chunk_examples(g);
  T* cols = scratch<T>(0, g.patch() * chunk * g.pixels());
  T* dcols = scratch<T>(1, g.patch() * chunk * g.pixels());
  T* gbuf = scratch<T>(2, g.f * chunk * g.pixels());
  const RowMatT<T> wm = ConstMapMat(w.raw(), g.f, g.patch()).cast<T>();
  RowMatT<T> gw_chunk(g.f, g.patch());
  MapMat gw(grads.grad_w.raw(), g.f, g.patch());
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, g.n - n0);
    const std::size_t width = nb * g.pixels();
    for (std::size_t nl = 0; nl < nb; ++nl) {
      for (std::size_t f = 0; f < g.f; ++f) {
        const double* src = grad_out.raw() + ((n0 + nl) * g.f + f) * g.pixels();
        T* dst = gbuf + f * width + nl * g.pixels();
        double s = 0.0;
        for (std::size_t p = 0; p < g.pixels(); ++p) {
          s += src[p];
          dst[p] = static_cast<T>(src[p]);
        }
        grads.grad_bias[f] += s;
      }
    }
    Eigen::Map<const RowMatT<T>> gm(gbuf, g.f, width);
    im2col(x, g, n0, nb, cols);
    gw_chunk.noalias() = gm * Eigen::Map<const RowMatT<T>>(cols, g.patch(), width).transpose();
    gw += gw_chunk.template cast<double>();
    Eigen::Map<RowMatT<T>>(dcols, g.patch(), width).noalias() = wm.transpose() * gm;
    col2im_add(dcols, g, n0, nb, grads.grad_x);
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::size_t spatial_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

GemmPrecision gemm_precision() { return current_precision; }

GemmPrecisionScope::GemmPrecisionScope(GemmPrecision precision)
    : saved_(current_precision) {
  current_precision = precision;
}

GemmPrecisionScope::~GemmPrecisionScope() { current_precision = saved_; }

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  if (bias && bias->shape() != Shape{g.f}) {
    throw ConfigError("conv2d bias shape " + shape_str(bias->shape()) +
                      " does not match " + std::to_string(g.f) + " filters");
  }
  Tensor out = Tensor::uninitialized({g.n, g.f, g.out_h, g.out_w});
  if (current_precision == GemmPrecision::kFloat32) {
    conv2d_impl<float>(x, w, bias, g, out);
  } else {
    conv2d_impl<double>(x, w, bias, g, out);
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& w, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  if (grad_out.shape() != Shape{g.n, g.f, g.out_h, g.out_w}) {
    throw InternalError("conv2d_backward: gradient shape " +
                        shape_str(grad_out.shape()) +
                        " does not match forward output");
  }
  Conv2dGrads grads{Tensor(x.shape()), Tensor(w.shape()), Tensor({g.f})};
  if (current_precision == GemmPrecision::kFloat32) {
    conv2d_backward_impl<float>(grad_out, x, w, g, grads);
  } else {
    conv2d_backward_impl<double>(grad_out, x, w, g, grads);
  }
  return grads;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul shape mismatch " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  MapMat(out.raw(), a.dim(0), b.dim(1)).noalias() =
      ConstMapMat(a.raw(), a.dim(0), a.dim(1)) *
      ConstMapMat(b.raw(), b.dim(0), b.dim(1));
  return out;
}

MatmulGrads matmul_backward(const Tensor& grad_out, const Tensor& a,
                            const Tensor& b) {
  if (grad_out.shape() != Shape{a.dim(0), b.dim(1)}) {
    throw InternalError("matmul_backward: gradient shape mismatch");
  }
  MatmulGrads g{Tensor(a.shape()), Tensor(b.shape())};
  ConstMapMat go(grad_out.raw(), a.dim(0), b.dim(1));
  MapMat(g.grad_a.raw(), a.dim(0), a.dim(1)).noalias() =
      go * ConstMapMat(b.raw(), b.dim(0), b.dim(1)).transpose();
  MapMat(g.grad_b.raw(), b.dim(0), b.dim(1)).noalias() =
      ConstMapMat(a.raw(), a.dim(0), a.dim(1)).transpose() * go;
  return g;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw ConfigError("linear shape mismatch " + shape_str(x.shape()) +
                      " with weight " + shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), out_f = w.dim(0), in_f = w.dim(1);
  Tensor out({n, out_f});
  MapMat om(out.raw(), n, out_f);
  om.noalias() = ConstMapMat(x.raw(), n, in_f) *
                 ConstMapMat(w.raw(), out_f, in_f).transpose();
  if (bias) {
    if (bias->shape() != Shape{out_f}) {
      throw ConfigError("linear bias shape mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_f; ++j) om(i, j) += (*bias)[j];
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& x,
                            const Tensor& w) {
  const std::size_t n = x.dim(0), out_f = w.dim(0), in_f = w.dim(1);
  if (grad_out.shape() != Shape{n, out_f}) {
    throw InternalError("linear_backward: gradient shape mismatch");
  }
  LinearGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({out_f})};
  ConstMapMat go(grad_out.raw(), n, out_f);
  MapMat(g.grad_x.raw(), n, in_f).noalias() =
      go * ConstMapMat(w.raw(), out_f, in_f);
  MapMat(g.grad_w.raw(), out_f, in_f).noalias() =
      go.transpose() * ConstMapMat(x.raw(), n, in_f);
  for (std::size_t j = 0; j < out_f; ++j) g.grad_bias[j] = go.col(j).sum();
  return g;
}

Tensor avg_pool2d(const Tensor& x, int kernel) {
  if (x.rank() != 4 || kernel < 1 || x.dim(2) % kernel || x.dim(3) % kernel) {
    throw ConfigError("avg_pool2d: input " + shape_str(x.shape()) +
                      " not divisible by window " + std::to_string(kernel));
  }
  const std::size_t k = kernel, n = x.dim(0), c = x.dim(1), h = x.dim(2),
                    w = x.dim(3), oh = h / k, ow = w / k;
  Tensor out({n, c, oh, ow});
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.raw() + plane * h * w;
    double* dst = out.raw() + plane * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) s += src[(i * k + a) * w + j * k + b];
        }
        dst[i * ow + j] = s * inv;
      }
    }
  }
  return out;
}

Tensor avg_pool2d_backward(const Tensor& grad_out, const Shape& input_shape,
                           int kernel) {
  const std::size_t k = kernel, h = input_shape[2], w = input_shape[3],
                    oh = h / k, ow = w / k;
  if (grad_out.shape() != Shape{input_shape[0], input_shape[1], oh, ow}) {
    throw InternalError("avg_pool2d_backward: gradient shape mismatch");
  }
  Tensor grad(input_shape);
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t plane = 0; plane < input_shape[0] * input_shape[1]; ++plane) {
    const double* src = grad_out.raw() + plane * oh * ow;
    double* dst = grad.raw() + plane * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) dst[i * w + j] = src[(i / k) * ow + j / k] * inv;
    }
  }
  return grad;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ConfigError("global_avg_pool expects rank 4");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
    out[p] = s / static_cast<double>(hw);
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out,
                                const Shape& input_shape) {
  if (grad_out.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw InternalError("global_avg_pool_backward: gradient shape mismatch");
  }
  Tensor grad(input_shape);
  const std::size_t hw = input_shape[2] * input_shape[3];
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t p = 0; p < grad_out.numel(); ++p) {
    std::fill_n(grad.raw() + p * hw, hw, grad_out[p] * inv);
  }
  return grad;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  require_same_shape(acc, x, "add_inplace");
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += x[i];
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = x;
  for (double& v : out.values()) v *= c;
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& x) {
  require_same_shape(grad_out, x, "relu_backward");
  Tensor grad = Tensor::uninitialized(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    grad[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return grad;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

namespace {

void check_norm_params(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta) {
  if (x.rank() < 2) throw ConfigError("batch norm expects rank >= 2 input");
  const Shape ch{x.dim(1)};
  if (gamma.shape() != ch || beta.shape() != ch) {
    throw ConfigError("batch norm affine shape mismatch for input " +
                      shape_str(x.shape()));
  }
}

Tensor apply_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormCache& c) {
  const std::size_t n = x.dim(0), ch = x.dim(1), s = spatial_size(x.shape());
  Tensor y = Tensor::uninitialized(x.shape());
  c.x_hat = Tensor::uninitialized(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      const std::size_t base = (i * ch + k) * s;
      for (std::size_t p = 0; p < s; ++p) {
        const double xh = (x[base + p] - c.mean[k]) * c.inv_std[k];
        c.x_hat[base + p] = xh;
        y[base + p] = gamma[k] * xh + beta[k];
      }
    }
  }
  return y;
}

}  // namespace

Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, double eps,
                          BatchNormCache* cache) {
  check_norm_params(x, gamma, beta);
  const std::size_t n = x.dim(0), ch = x.dim(1), s = spatial_size(x.shape());
  BatchNormCache local;
  BatchNormCache& c = cache ? *cache : local;
  c.count = n * s;
  c.batch_stats = true;
  c.mean.assign(ch, 0.0);
  c.inv_std.assign(ch, 0.0);
  std::vector<double> var(ch, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      const double* p = x.raw() + (i * ch + k) * s;
      for (std::size_t j = 0; j < s; ++j) c.mean[k] += p[j];
    }
  }
  for (auto& m : c.mean) m /= static_cast<double>(c.count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      const double* p = x.raw() + (i * ch + k) * s;
      for (std::size_t j = 0; j < s; ++j) {
        const double d = p[j] - c.mean[k];
        var[k] += d * d;
      }
    }
  }
  for (std::size_t k = 0; k < ch; ++k) {
    var[k] /= static_cast<double>(c.count);
    c.inv_std[k] = 1.0 / std::sqrt(var[k] + eps);
  }
  c.var = std::move(var);
  return apply_norm(x, gamma, beta, c);
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma,
                            const Tensor& beta, const Tensor& mean,
                            const Tensor& var, double eps,
                            BatchNormCache* cache) {
  check_norm_params(x, gamma, beta);
  const std::size_t ch = x.dim(1);
  BatchNormCache local;
  BatchNormCache& c = cache ? *cache : local;
  c.count = x.dim(0) * spatial_size(x.shape());
  c.batch_stats = false;
  c.mean.assign(mean.values().begin(), mean.values().end());
  c.var.assign(var.values().begin(), var.values().end());
  c.inv_std.resize(ch);
  for (std::size_t k = 0; k < ch; ++k) c.inv_std[k] = 1.0 / std::sqrt(var[k] + eps);
  return apply_norm(x, gamma, beta, c);
}

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const Tensor& gamma,
                                   const BatchNormCache& cache) {
  const Tensor& xh = cache.x_hat;
  if (grad_out.shape() != xh.shape()) {
    throw InternalError("batch_norm_backward: gradient shape " +
                        shape_str(grad_out.shape()) + " vs cached " +
                        shape_str(xh.shape()));
  }
  const std::size_t n = xh.dim(0), ch = xh.dim(1), s = spatial_size(xh.shape());
  BatchNormGrads g{Tensor::uninitialized(xh.shape()), Tensor({ch}), Tensor({ch})};
  std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      const std::size_t base = (i * ch + k) * s;
      for (std::size_t p = 0; p < s; ++p) {
        sum_g[k] += grad_out[base + p];
        sum_gx[k] += grad_out[base + p] * xh[base + p];
      }
    }
  }
  for (std::size_t k = 0; k < ch; ++k) {
    g.grad_beta[k] = sum_g[k];
    g.grad_gamma[k] = sum_gx[k];
  }
  const double inv_count = 1.0 / static_cast<double>(cache.count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ch; ++k) {
      const std::size_t base = (i * ch + k) * s;
      const double scale_k = gamma[k] * cache.inv_std[k];
      for (std::size_t p = 0; p < s; ++p) {
        const double go = grad_out[base + p];
        g.grad_x[base + p] =
            cache.batch_stats
                ? scale_k * (go - inv_count * sum_g[k] -
                             xh[base + p] * inv_count * sum_gx[k])
                : scale_k * go;
      }
    }
  }
  return g;
}

namespace reference {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride,
              int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  Tensor out({g.n, g.f, g.out_h, g.out_w});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t f = 0; f < g.f; ++f) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          double acc = bias ? (*bias)[f] : 0.0;
          for (std::size_t c = 0; c < g.c; ++c) {
            for (std::size_t ki = 0; ki < g.kh; ++ki) {
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.h) ||
                    iw >= static_cast<long>(g.w)) {
                  continue;
                }
                acc += x.at(n, c, ih, iw) * w.at(f, c, ki, kj);
              }
            }
          }
          out.at(n, f, oh, ow) = acc;
        }
      }
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul shape mismatch");
  }
  Tensor out({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor avg_pool2d(const Tensor& x, int kernel) {
  const std::size_t k = kernel;
  Tensor out({x.dim(0), x.dim(1), x.dim(2) / k, x.dim(3) / k});
  for (std::size_t n = 0; n < out.dim(0); ++n)
    for (std::size_t c = 0; c < out.dim(1); ++c)
      for (std::size_t i = 0; i < out.dim(2); ++i)
        for (std::size_t j = 0; j < out.dim(3); ++j) {
          double s = 0.0;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) s += x.at(n, c, i * k + a, j * k + b);
          out.at(n, c, i, j) = s / static_cast<double>(k * k);
        }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor out({x.dim(0), x.dim(1)});
  for (std::size_t n = 0; n < x.dim(0); ++n)
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j) s += x.at(n, c, i, j);
      out.at(n, c) = s / static_cast<double>(x.dim(2) * x.dim(3));
    }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t n = x.dim(0), ch = x.dim(1), s = x.numel() / (n * ch);
  Tensor y(x.shape());
  for (std::size_t k = 0; k < ch; ++k) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < s; ++p) vals.push_back(x[(i * ch + k) * s + p]);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < s; ++p) {
        const std::size_t idx = (i * ch + k) * s + p;
        y[idx] = gamma[k] * (x[idx] - mean) / std::sqrt(var + eps) + beta[k];
      }
  }
  return y;
}

}  // namespace reference
}  // namespace spikescope
