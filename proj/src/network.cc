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

#include "spikescope/network.h"

#include <cstring>
#include <fstream>
#include <map>

#include "binary_io.h"
#include "spikescope/errors.h"

namespace spikescope {

Network::Network(NetworkSpec spec, std::uint64_t init_seed)
    : spec_(std::move(spec)) {
  if (spec_.mode == Mode::kSnn) spec_.lif.validate();
  Rng rng(Rng::derive(init_seed, "init"));
  for (const auto& l : spec_.layers) {
    layers_.push_back(make_layer(l, spec_.lif, rng));
  }
}

Tensor Network::forward(const Tensor& encoded, bool training,
                        const TapSink* sink) {
  const std::size_t steps = input_time_steps();
  if (encoded.rank() != 5 || encoded.dim(0) != steps ||
      encoded.dim(2) != spec_.input_channels) {
    throw ConfigError("network expects encoded input [" + std::to_string(steps) +
                      ", N, " + std::to_string(spec_.input_channels) +
                      ", H, W], got " + shape_str(encoded.shape()));
  }
  encoded_shape_ = encoded.shape();
  const std::size_t n = encoded.dim(1);
  Tensor x = encoded.reshaped(
      {steps * n, encoded.dim(2), encoded.dim(3), encoded.dim(4)});
  RunContext ctx{steps, training, sink};
  if (sink && *sink) (*sink)({"input", "input", 0, 0}, x, steps);
  for (auto& layer : layers_) {
    x = layer->forward(x, ctx);
    if (!x.all_finite()) {
      throw NumericError("non-finite activation produced by layer '" +
                         layer->spec().name + "'");
    }
  }
  output_steps_ = ctx.time_steps;
  if (x.rank() != 2 || x.dim(0) != output_steps_ * n) {
    throw InternalError("network head produced " + shape_str(x.shape()));
  }
  const std::size_t classes = x.dim(1);
  Tensor logits({n, classes});
  for (std::size_t t = 0; t < output_steps_; ++t) {
    for (std::size_t i = 0; i < n * classes; ++i) logits[i] += x[t * n * classes + i];
  }
  for (double& v : logits.values()) v /= static_cast<double>(output_steps_);
  return logits;
}

Tensor Network::backward(const Tensor& grad_logits) {
  if (encoded_shape_.empty()) throw InternalError("backward before forward");
  const std::size_t n = encoded_shape_[1];
  if (grad_logits.rank() != 2 || grad_logits.dim(0) != n) {
    throw InternalError("backward: logits gradient shape " +
                        shape_str(grad_logits.shape()));
  }
  const std::size_t classes = grad_logits.dim(1);
  Tensor g({output_steps_ * n, classes});
  const double inv = 1.0 / static_cast<double>(output_steps_);
  for (std::size_t t = 0; t < output_steps_; ++t) {
    for (std::size_t i = 0; i < n * classes; ++i) {
      g[t * n * classes + i] = grad_logits[i] * inv;
    }
  }
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g);
  }
  g.reshape(encoded_shape_);
  return g;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) l->collect_parameters(out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

std::vector<TapInfo> Network::taps() const {
  std::vector<TapInfo> out{{"input", "input", 0, 0}};
  for (const auto& l : layers_) l->collect_taps(out);
  return out;
}

namespace {
constexpr char kCheckpointMagic[4] = {'S', 'P', 'K', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void Network::save(const std::string& path) const {
  auto* self = const_cast<Network*>(this);
  std::vector<std::pair<std::string, const Tensor*>> entries;
  for (Parameter* p : self->parameters()) entries.emplace_back(p->name, &p->value);
  for (auto& [name, t] : self->buffers()) entries.emplace_back(name, t);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string spec_json = to_json(spec_).dump();
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, spec_json.size());
  out.write(spec_json.data(), static_cast<std::streamsize>(spec_json.size()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, *t);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Network Network::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path + ": not a checkpoint (bad magic)");
  }
  if (detail::read_le<std::uint32_t>(in, "checkpoint version") != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version");
  }
  const auto len = detail::read_le<std::uint64_t>(in, "spec length");
  std::string spec_json(len, '\0');
  if (!in.read(spec_json.data(), static_cast<std::streamsize>(len))) {
    throw IoError(path + ": truncated spec");
  }
  Network net(network_spec_from_json(nlohmann::json::parse(spec_json)), 0);
  std::map<std::string, Tensor*> slots;
  for (Parameter* p : net.parameters()) slots[p->name] = &p->value;
  for (auto& [name, t] : net.buffers()) slots[name] = t;
  const auto count = detail::read_le<std::uint32_t>(in, "entry count");
  if (count != slots.size()) {
    throw FormatError(path + ": checkpoint holds " + std::to_string(count) +
                      " tensors, network expects " + std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_le<std::uint32_t>(in, "entry name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError(path + ": truncated entry name");
    Tensor t = read_tensor(in);
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError(path + ": unexpected tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw FormatError(path + ": tensor '" + name + "' has shape " +
                        shape_str(t.shape()) + ", expected " +
                        shape_str(it->second->shape()));
    }
    *it->second = std::move(t);
  }
  return net;
}

}  // namespace spikescope
