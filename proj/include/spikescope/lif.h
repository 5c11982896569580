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

#ifndef SPIKESCOPE_LIF_H_
#define SPIKESCOPE_LIF_H_

#include <string>

#include "spikescope/ops.h"
#include "spikescope/tensor.h"

namespace spikescope {

struct LIFConfig {
  double tau = 0.5;    // leak factor, (0, 1)
  double v_th = 1.0;   // firing threshold
  double alpha = 1.0;  // surrogate window half-width

  void validate() const;
  bool operator==(const LIFConfig&) const = default;
};

// Per-step quantities saved for the reverse-time recursion. Tensors are
// [T, ...] with the same trailing extents as the input sequence.
struct LIFState {
  Tensor u;            // membrane potential after the last step
  Tensor saved_upre;   // u^(t),pre for every t
  Tensor saved_spikes; // y^(t) for every t, exactly 0 or 1
  Tensor saved_u;      // u^(t) after reset for every t
};

struct LIFResult {
  Tensor spikes;  // [T, ...]
  LIFState state;
};

// Runs the leaky integrate-and-fire recursion from u = 0:
//   u_pre = tau * u_prev + i,  y = 1[u_pre > v_th],  u = u_pre * (1 - y).
// `where` names the layer in error messages.
LIFResult lif_forward(const Tensor& input_seq, const LIFConfig& cfg,
                      const std::string& where = "lif");

// Surrogate derivative of the spike function.
inline double lif_surrogate(double u_pre, const LIFConfig& cfg) {
  const double d = u_pre - cfg.v_th;
  return (d < cfg.alpha && -d < cfg.alpha) ? 1.0 / cfg.alpha : 0.0;
}

// Reverse-time recursion. The reset u = u_pre * (1 - y) is differentiated in
// full, with the surrogate substituted for dy/du_pre wherever it appears:
//   du/du_pre = (1 - y) - u_pre * s,  s = surrogate(u_pre).
Tensor lif_backward(const Tensor& grad_spikes, const LIFState& state,
                    const LIFConfig& cfg);

enum class TimePolicy { kRepeat, kAverage };

// Bridges stages that run with different time-step counts. Repeat requires a
// single input step; average always produces a single output step.
Tensor time_adapter(const Tensor& x_seq, std::size_t t_out, TimePolicy policy);
Tensor time_adapter_backward(const Tensor& grad_out, std::size_t t_in,
                             TimePolicy policy);

// Time-dependent batch norm: statistics pooled over the merged (T*N) axis and
// the spatial axes. x_seq is [T, N, C, H, W]; a [T*N, C, H, W] tensor is
// accepted as-is.
struct TdbnParams {
  Tensor gamma, beta, running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};
Tensor tdbn_forward(const Tensor& x_seq, TdbnParams& params, bool training,
                    BatchNormCache* cache = nullptr);

}  // namespace spikescope

#endif  // SPIKESCOPE_LIF_H_
