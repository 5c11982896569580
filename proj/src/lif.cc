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

#include "spikescope/lif.h"

#include <algorithm>
#include <cmath>

#include "spikescope/errors.h"

namespace spikescope {

void LIFConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("LIF tau must lie in (0, 1), got " + std::to_string(tau));
  }
  if (!(v_th > 0.0)) throw ConfigError("LIF v_th must be positive");
  if (!(alpha > 0.0)) throw ConfigError("LIF alpha must be positive");
}

LIFResult lif_forward(const Tensor& input_seq, const LIFConfig& cfg,
                      const std::string& where) {
  if (input_seq.rank() < 1 || input_seq.dim(0) < 1) {
    throw ConfigError(where + ": LIF input needs a leading time axis, got " +
                      shape_str(input_seq.shape()));
  }
  const std::size_t steps = input_seq.dim(0);
  const std::size_t width = input_seq.numel() / steps;
  Shape step_shape(input_seq.shape().begin() + 1, input_seq.shape().end());

  LIFResult r{Tensor::uninitialized(input_seq.shape()),
              {Tensor(step_shape), Tensor::uninitialized(input_seq.shape()),
               Tensor(), Tensor::uninitialized(input_seq.shape())}};
  double* u = r.state.u.raw();
  for (std::size_t t = 0; t < steps; ++t) {
    const double* in = input_seq.raw() + t * width;
    double* upre = r.state.saved_upre.raw() + t * width;
    double* y = r.spikes.raw() + t * width;
    double* upost = r.state.saved_u.raw() + t * width;
    bool finite = true;
    for (std::size_t j = 0; j < width; ++j) finite &= std::isfinite(in[j]);
    if (!finite) {
      const std::size_t j = static_cast<std::size_t>(
          std::find_if(in, in + width, [](double v) { return !std::isfinite(v); }) - in);
      throw NumericError(where + ": non-finite input at time step " +
                         std::to_string(t) + ", neuron " + std::to_string(j));
    }
    for (std::size_t j = 0; j < width; ++j) {
      const double pre = cfg.tau * u[j] + in[j];
      const double spike = pre > cfg.v_th ? 1.0 : 0.0;
      const double post = pre > cfg.v_th ? 0.0 : pre;
      upre[j] = pre;
      y[j] = spike;
      u[j] = post;
      upost[j] = post;
    }
  }
  r.state.saved_spikes = r.spikes;
  return r;
}

Tensor lif_backward(const Tensor& grad_spikes, const LIFState& state,
                    const LIFConfig& cfg) {
  if (grad_spikes.shape() != state.saved_upre.shape() ||
      state.saved_spikes.shape() != state.saved_upre.shape()) {
    throw InternalError("lif_backward: gradient " +
                        shape_str(grad_spikes.shape()) +
                        " does not match saved state " +
                        shape_str(state.saved_upre.shape()));
  }
  const std::size_t steps = grad_spikes.dim(0);
  const std::size_t width = grad_spikes.numel() / steps;
  Tensor grad_in = Tensor::uninitialized(grad_spikes.shape());
  // Gradient reaching u^(t) from step t+1; zero beyond the last step.
  std::vector<double> grad_u(width, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    const double* gy = grad_spikes.raw() + t * width;
    const double* upre = state.saved_upre.raw() + t * width;
    const double* y = state.saved_spikes.raw() + t * width;
    double* gi = grad_in.raw() + t * width;
    for (std::size_t j = 0; j < width; ++j) {
      const double s = lif_surrogate(upre[j], cfg);
      const double du_dupre = (1.0 - y[j]) - upre[j] * s;
      const double g_upre = gy[j] * s + grad_u[j] * du_dupre;
      gi[j] = g_upre;
      grad_u[j] = cfg.tau * g_upre;
    }
  }
  return grad_in;
}

Tensor time_adapter(const Tensor& x_seq, std::size_t t_out, TimePolicy policy) {
  if (x_seq.rank() < 1 || x_seq.dim(0) < 1 || t_out < 1) {
    throw ConfigError("time_adapter: bad input " + shape_str(x_seq.shape()));
  }
  const std::size_t t_in = x_seq.dim(0);
  const std::size_t width = x_seq.numel() / t_in;
  Shape out_shape = x_seq.shape();
  out_shape[0] = t_out;
  Tensor out(out_shape);
  if (policy == TimePolicy::kRepeat) {
    if (t_in != 1) {
      throw ConfigError("time_adapter: repeat needs T_in = 1, got " +
                        std::to_string(t_in));
    }
    for (std::size_t t = 0; t < t_out; ++t) {
      std::copy(x_seq.raw(), x_seq.raw() + width, out.raw() + t * width);
    }
    return out;
  }
  if (t_out != 1) {
    throw ConfigError("time_adapter: average produces T_out = 1, requested " +
                      std::to_string(t_out));
  }
  for (std::size_t t = 0; t < t_in; ++t) {
    for (std::size_t j = 0; j < width; ++j) out[j] += x_seq[t * width + j];
  }
  for (double& v : out.values()) v /= static_cast<double>(t_in);
  return out;
}

Tensor time_adapter_backward(const Tensor& grad_out, std::size_t t_in,
                             TimePolicy policy) {
  const std::size_t t_out = grad_out.dim(0);
  const std::size_t width = grad_out.numel() / t_out;
  Shape in_shape = grad_out.shape();
  in_shape[0] = t_in;
  Tensor grad(in_shape);
  if (policy == TimePolicy::kRepeat) {
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t j = 0; j < width; ++j) grad[j] += grad_out[t * width + j];
    }
  } else {
    const double inv = 1.0 / static_cast<double>(t_in);
    for (std::size_t t = 0; t < t_in; ++t) {
      for (std::size_t j = 0; j < width; ++j) grad[t * width + j] = grad_out[j] * inv;
    }
  }
  return grad;
}

Tensor tdbn_forward(const Tensor& x_seq, TdbnParams& params, bool training,
                    BatchNormCache* cache) {
  Tensor merged = x_seq;
  if (x_seq.rank() == 5) {
    const Shape& s = x_seq.shape();
    merged.reshape({s[0] * s[1], s[2], s[3], s[4]});
  }
  Tensor y;
  if (training) {
    if (merged.dim(0) < 2) {
      throw ConfigError("tdbn in training mode needs T*N >= 2");
    }
    BatchNormCache local;
    BatchNormCache& c = cache ? *cache : local;
    y = batch_norm_forward(merged, params.gamma, params.beta, params.eps, &c);
    const double count = static_cast<double>(c.count);
    for (std::size_t k = 0; k < params.gamma.numel(); ++k) {
      const double var = c.var[k];
      const double unbiased = count > 1 ? var * count / (count - 1.0) : var;
      params.running_mean[k] =
          (1.0 - params.momentum) * params.running_mean[k] + params.momentum * c.mean[k];
      params.running_var[k] =
          (1.0 - params.momentum) * params.running_var[k] + params.momentum * unbiased;
    }
  } else {
    y = batch_norm_inference(merged, params.gamma, params.beta,
                             params.running_mean, params.running_var,
                             params.eps, cache);
  }
  y.reshape(x_seq.shape());
  return y;
}

}  // namespace spikescope
