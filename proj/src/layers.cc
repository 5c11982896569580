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

#include "spikescope/layers.h"

#include <cmath>

#include "spikescope/errors.h"

namespace spikescope {

void Layer::collect_taps(std::vector<TapInfo>& out) const {
  out.push_back(tap_info(to_string(spec_.kind)));
}

TapInfo Layer::tap_info(std::string kind) const {
  return {spec_.name, std::move(kind), spec_.stage, spec_.block};
}

void Layer::emit(const RunContext& ctx, const Tensor& out,
                 const std::string& kind) const {
  if (ctx.sink && *ctx.sink) (*ctx.sink)(tap_info(kind), out, ctx.time_steps);
}

namespace {

Parameter make_param(std::string name, Tensor value, bool decay) {
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.velocity = Tensor(value.shape());
  p.value = std::move(value);
  p.decay = decay;
  return p;
}

std::vector<std::unique_ptr<Layer>> make_layers(const std::vector<LayerSpec>& specs,
                                                const LIFConfig& lif, Rng& rng) {
  std::vector<std::unique_ptr<Layer>> layers;
  for (const auto& s : specs) layers.push_back(make_layer(s, lif, rng));
  return layers;
}

Tensor run_forward(std::vector<std::unique_ptr<Layer>>& layers, Tensor x,
                   RunContext& ctx) {
  for (auto& l : layers) x = l->forward(x, ctx);
  return x;
}

Tensor run_backward(std::vector<std::unique_ptr<Layer>>& layers, Tensor g) {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
  return g;
}

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const LIFConfig& lif,
                                  Rng& rng) {
  switch (spec.kind) {
    case LayerKind::kConv: return std::make_unique<Conv2dLayer>(spec, rng);
    case LayerKind::kBn:
    case LayerKind::kTdbn: return std::make_unique<NormLayer>(spec);
    case LayerKind::kRelu: return std::make_unique<ReluLayer>(spec);
    case LayerKind::kLif: return std::make_unique<LifLayer>(spec, lif);
    case LayerKind::kAvgPool: return std::make_unique<AvgPoolLayer>(spec);
    case LayerKind::kGlobalPool: return std::make_unique<GlobalPoolLayer>(spec);
    case LayerKind::kFc: return std::make_unique<LinearLayer>(spec, rng);
    case LayerKind::kResidualBlock:
      return std::make_unique<ResidualBlockLayer>(spec, lif, rng);
    case LayerKind::kTimeAdapter: return std::make_unique<TimeAdapterLayer>(spec);
  }
  throw InternalError("unhandled layer kind");
}

Conv2dLayer::Conv2dLayer(const LayerSpec& spec, Rng& rng) : Layer(spec) {
  const Shape ws{spec.out_channels, spec.in_channels,
                 static_cast<std::size_t>(spec.kernel),
                 static_cast<std::size_t>(spec.kernel)};
  const double fan_out =
      static_cast<double>(spec.out_channels * spec.kernel * spec.kernel);
  weight_ = make_param(spec.name + ".weight",
                       random_normal(ws, rng, std::sqrt(2.0 / fan_out)), true);
  if (spec.bias) {
    bias_ = make_param(spec.name + ".bias", Tensor({spec.out_channels}), false);
  }
}

Tensor Conv2dLayer::forward(const Tensor& x, RunContext& ctx) {
  input_ = x;
  Tensor y = conv2d(x, weight_.value, spec_.bias ? &bias_.value : nullptr,
                    spec_.stride, spec_.pad);
  emit(ctx, y, "conv");
  return y;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
  Conv2dGrads g = conv2d_backward(grad_out, input_, weight_.value, spec_.stride,
                                  spec_.pad);
  add_inplace(weight_.grad, g.grad_w);
  if (spec_.bias) add_inplace(bias_.grad, g.grad_bias);
  return std::move(g.grad_x);
}

void Conv2dLayer::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (spec_.bias) out.push_back(&bias_);
}

NormLayer::NormLayer(const LayerSpec& spec) : Layer(spec) {
  const Shape s{spec.out_channels};
  gamma_ = make_param(spec.name + ".gamma", Tensor(s, 1.0), false);
  beta_ = make_param(spec.name + ".beta", Tensor(s, 0.0), false);
  stats_.running_mean = Tensor(s, 0.0);
  stats_.running_var = Tensor(s, 1.0);
}

Tensor NormLayer::forward(const Tensor& x, RunContext& ctx) {
  stats_.gamma = gamma_.value;
  stats_.beta = beta_.value;
  Tensor y = tdbn_forward(x, stats_, ctx.training, &cache_);
  emit(ctx, y, to_string(spec_.kind));
  return y;
}

Tensor NormLayer::backward(const Tensor& grad_out) {
  BatchNormGrads g = batch_norm_backward(grad_out, gamma_.value, cache_);
  add_inplace(gamma_.grad, g.grad_gamma);
  add_inplace(beta_.grad, g.grad_beta);
  return std::move(g.grad_x);
}

void NormLayer::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void NormLayer::collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(spec_.name + ".running_mean", &stats_.running_mean);
  out.emplace_back(spec_.name + ".running_var", &stats_.running_var);
}

Tensor ReluLayer::forward(const Tensor& x, RunContext& ctx) {
  input_ = x;
  Tensor y = relu(x);
  emit(ctx, y, "relu");
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
  return relu_backward(grad_out, input_);
}

Tensor LifLayer::forward(const Tensor& x, RunContext& ctx) {
  const std::size_t steps = ctx.time_steps;
  if (steps == 0 || x.dim(0) % steps != 0) {
    throw InternalError(spec_.name + ": batch axis " + std::to_string(x.dim(0)) +
                        " not divisible by T = " + std::to_string(steps));
  }
  shape_ = x.shape();
  LIFResult r = lif_forward(x.reshaped({steps, x.numel() / steps}), cfg_, spec_.name);
  state_ = std::move(r.state);
  r.spikes.reshape(shape_);
  emit(ctx, r.spikes, "lif");
  return std::move(r.spikes);
}

Tensor LifLayer::backward(const Tensor& grad_out) {
  if (grad_out.shape() != shape_) {
    throw InternalError(spec_.name + ": gradient shape mismatch");
  }
  Tensor g = lif_backward(grad_out.reshaped(state_.saved_upre.shape()), state_, cfg_);
  g.reshape(shape_);
  return g;
}

Tensor AvgPoolLayer::forward(const Tensor& x, RunContext&) {
  input_shape_ = x.shape();
  return avg_pool2d(x, spec_.kernel);
}

Tensor AvgPoolLayer::backward(const Tensor& grad_out) {
  return avg_pool2d_backward(grad_out, input_shape_, spec_.kernel);
}

Tensor GlobalPoolLayer::forward(const Tensor& x, RunContext&) {
  input_shape_ = x.shape();
  return global_avg_pool(x);
}

Tensor GlobalPoolLayer::backward(const Tensor& grad_out) {
  return global_avg_pool_backward(grad_out, input_shape_);
}

LinearLayer::LinearLayer(const LayerSpec& spec, Rng& rng) : Layer(spec) {
  const double fan_in = static_cast<double>(spec.in_channels);
  weight_ = make_param(spec.name + ".weight",
                       random_normal({spec.out_channels, spec.in_channels}, rng,
                                     std::sqrt(1.0 / fan_in)),
                       true);
  bias_ = make_param(spec.name + ".bias", Tensor({spec.out_channels}), false);
}

Tensor LinearLayer::forward(const Tensor& x, RunContext& ctx) {
  input_ = x;
  Tensor y = linear(x, weight_.value, spec_.bias ? &bias_.value : nullptr);
  emit(ctx, y, "logits");
  return y;
}

Tensor LinearLayer::backward(const Tensor& grad_out) {
  LinearGrads g = linear_backward(grad_out, input_, weight_.value);
  add_inplace(weight_.grad, g.grad_w);
  if (spec_.bias) add_inplace(bias_.grad, g.grad_bias);
  return std::move(g.grad_x);
}

void LinearLayer::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (spec_.bias) out.push_back(&bias_);
}

void LinearLayer::collect_taps(std::vector<TapInfo>& out) const {
  out.push_back(tap_info("logits"));
}

ResidualBlockLayer::ResidualBlockLayer(const LayerSpec& spec,
                                       const LIFConfig& lif, Rng& rng)
    : Layer(spec),
      branch_(make_layers(spec.branch, lif, rng)),
      shortcut_(make_layers(spec.shortcut, lif, rng)) {}

Tensor ResidualBlockLayer::forward(const Tensor& x, RunContext& ctx) {
  Tensor out = run_forward(branch_, x, ctx);
  if (spec_.residual) {
    RunContext quiet = ctx;
    quiet.sink = nullptr;
    Tensor skip = shortcut_.empty() ? x : run_forward(shortcut_, x, quiet);
    if (skip.shape() != out.shape()) {
      throw ConfigError(spec_.name + ": shortcut shape " + shape_str(skip.shape()) +
                        " does not match branch shape " + shape_str(out.shape()));
    }
    add_inplace(out, skip);
  }
  emit(ctx, out, "block_out");
  return out;
}

Tensor ResidualBlockLayer::backward(const Tensor& grad_out) {
  Tensor g = run_backward(branch_, grad_out);
  if (spec_.residual) {
    add_inplace(g, shortcut_.empty() ? grad_out : run_backward(shortcut_, grad_out));
  }
  return g;
}

void ResidualBlockLayer::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& l : branch_) l->collect_parameters(out);
  for (auto& l : shortcut_) l->collect_parameters(out);
}

void ResidualBlockLayer::collect_buffers(
    std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& l : branch_) l->collect_buffers(out);
  for (auto& l : shortcut_) l->collect_buffers(out);
}

void ResidualBlockLayer::collect_taps(std::vector<TapInfo>& out) const {
  for (const auto& l : branch_) l->collect_taps(out);
  out.push_back(tap_info("block_out"));
}

Tensor TimeAdapterLayer::forward(const Tensor& x, RunContext& ctx) {
  t_in_ = ctx.time_steps;
  input_shape_ = x.shape();
  Tensor y = time_adapter(x.reshaped({t_in_, x.numel() / t_in_}),
                          spec_.time_steps, spec_.policy);
  Shape out_shape = x.shape();
  out_shape[0] = x.dim(0) / t_in_ * spec_.time_steps;
  y.reshape(out_shape);
  ctx.time_steps = spec_.time_steps;
  return y;
}

Tensor TimeAdapterLayer::backward(const Tensor& grad_out) {
  const std::size_t t_out = spec_.time_steps;
  Tensor g = time_adapter_backward(
      grad_out.reshaped({t_out, grad_out.numel() / t_out}), t_in_, spec_.policy);
  g.reshape(input_shape_);
  return g;
}

}  // namespace spikescope
