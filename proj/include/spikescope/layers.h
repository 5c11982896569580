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

#ifndef SPIKESCOPE_LAYERS_H_
#define SPIKESCOPE_LAYERS_H_

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spikescope/lif.h"
#include "spikescope/network_spec.h"
#include "spikescope/ops.h"
#include "spikescope/tensor.h"

namespace spikescope {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;  // SGD momentum buffer
  bool decay = true;
};

// Identifies a recordable activation. `kind` is the layer kind name, or one
// of "input", "block_out", "logits".
struct TapInfo {
  std::string name;
  std::string kind;
  int stage = 0;
  int block = 0;
  bool operator==(const TapInfo&) const = default;
};

// Receives a layer output laid out as [T*N, ...] (time-major).
using TapSink =
    std::function<void(const TapInfo&, const Tensor& output, std::size_t time_steps)>;

struct RunContext {
  std::size_t time_steps = 1;
  bool training = false;
  const TapSink* sink = nullptr;
};

// A layer consumes and produces time-major [T*N, ...] tensors. Backward must
// follow the matching forward call; it accumulates parameter gradients.
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual Tensor forward(const Tensor& x, RunContext& ctx) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter*>& out) { (void)out; }
  virtual void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    (void)out;
  }
  virtual void collect_taps(std::vector<TapInfo>& out) const;

  const LayerSpec& spec() const { return spec_; }

 protected:
  TapInfo tap_info(std::string kind) const;
  void emit(const RunContext& ctx, const Tensor& out, const std::string& kind) const;

  LayerSpec spec_;
};

// Builds one layer with freshly initialized parameters: Kaiming-normal
// (fan-out) conv kernels, N(0, 1/fan_in) fc weights, unit/zero norm affine,
// zero biases.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const LIFConfig& lif,
                                  Rng& init_rng);

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(const LayerSpec& spec, Rng& rng);
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// bn (ann) and tdbn (snn) share one implementation: statistics are pooled
// over the merged T*N axis, which for T = 1 is plain batch norm.
class NormLayer : public Layer {
 public:
  explicit NormLayer(const LayerSpec& spec);
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) override;

 private:
  Parameter gamma_;
  Parameter beta_;
  TdbnParams stats_;
  BatchNormCache cache_;
};

class ReluLayer : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor input_;
};

class LifLayer : public Layer {
 public:
  LifLayer(const LayerSpec& spec, const LIFConfig& cfg) : Layer(spec), cfg_(cfg) {}
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  LIFConfig cfg_;
  LIFState state_;
  Shape shape_;
};

class AvgPoolLayer : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_taps(std::vector<TapInfo>&) const override {}

 private:
  Shape input_shape_;
};

class GlobalPoolLayer : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_taps(std::vector<TapInfo>&) const override {}

 private:
  Shape input_shape_;
};

// Classifier applied independently at every time step; emits the "logits" tap.
class LinearLayer : public Layer {
 public:
  LinearLayer(const LayerSpec& spec, Rng& rng);
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_taps(std::vector<TapInfo>& out) const override;

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// out = shortcut(x) + branch(x), or branch(x) alone with the residual path
// disabled. Branch layers are tapped, the shortcut is not; the sum is the
// "block_out" tap.
class ResidualBlockLayer : public Layer {
 public:
  ResidualBlockLayer(const LayerSpec& spec, const LIFConfig& lif, Rng& rng);
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) override;
  void collect_taps(std::vector<TapInfo>& out) const override;

  std::vector<std::unique_ptr<Layer>>& branch() { return branch_; }
  std::vector<std::unique_ptr<Layer>>& shortcut() { return shortcut_; }

 private:
  std::vector<std::unique_ptr<Layer>> branch_;
  std::vector<std::unique_ptr<Layer>> shortcut_;
};

class TimeAdapterLayer : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(const Tensor& x, RunContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_taps(std::vector<TapInfo>&) const override {}

 private:
  std::size_t t_in_ = 1;
  Shape input_shape_;
};

}  // namespace spikescope

#endif  // SPIKESCOPE_LAYERS_H_
