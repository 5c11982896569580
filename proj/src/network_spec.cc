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

#include "spikescope/network_spec.h"

#include <map>

#include "spikescope/errors.h"

namespace spikescope {

using nlohmann::json;

namespace {

const std::map<LayerKind, std::string>& kind_names() {
  static const std::map<LayerKind, std::string> names{
      {LayerKind::kConv, "conv"},
      {LayerKind::kBn, "bn"},
      {LayerKind::kTdbn, "tdbn"},
      {LayerKind::kRelu, "relu"},
      {LayerKind::kLif, "lif"},
      {LayerKind::kAvgPool, "avgpool"},
      {LayerKind::kGlobalPool, "globalpool"},
      {LayerKind::kFc, "fc"},
      {LayerKind::kResidualBlock, "residual_block"},
      {LayerKind::kTimeAdapter, "time_adapter"},
  };
  return names;
}

}  // namespace

std::string to_string(LayerKind kind) { return kind_names().at(kind); }
std::string to_string(Mode mode) { return mode == Mode::kAnn ? "ann" : "snn"; }
std::string to_string(Family family) {
  return family == Family::kResnet ? "resnet" : "vgg";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (const auto& [kind, name] : kind_names()) {
    if (name == s) return kind;
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

Mode parse_mode(const std::string& s) {
  if (s == "ann") return Mode::kAnn;
  if (s == "snn") return Mode::kSnn;
  throw ConfigError("unknown mode '" + s + "' (expected ann or snn)");
}

Family parse_family(const std::string& s) {
  if (s == "resnet") return Family::kResnet;
  if (s == "vgg") return Family::kVgg;
  throw ConfigError("unknown family '" + s + "' (expected resnet or vgg)");
}

std::size_t NetworkSpec::input_time_steps() const {
  if (mode == Mode::kAnn) return 1;
  if (!stages.empty() && stages.front().time_steps_override) {
    return *stages.front().time_steps_override;
  }
  return time_steps;
}

json to_json(const LayerSpec& l) {
  json j{{"kind", to_string(l.kind)}, {"name", l.name}, {"stage", l.stage},
         {"block", l.block}};
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kFc:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
      j["bias"] = l.bias;
      break;
    case LayerKind::kBn:
    case LayerKind::kTdbn:
      j["channels"] = l.out_channels;
      break;
    case LayerKind::kAvgPool:
      j["kernel"] = l.kernel;
      break;
    case LayerKind::kResidualBlock: {
      j["residual"] = l.residual;
      j["stride"] = l.stride;
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      json branch = json::array(), shortcut = json::array();
      for (const auto& c : l.branch) branch.push_back(to_json(c));
      for (const auto& c : l.shortcut) shortcut.push_back(to_json(c));
      j["branch"] = branch;
      j["shortcut"] = shortcut;
      break;
    }
    case LayerKind::kTimeAdapter:
      j["time_steps"] = l.time_steps;
      j["policy"] = l.policy == TimePolicy::kRepeat ? "repeat" : "average";
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_spec_from_json(const json& j) {
  LayerSpec l;
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  l.stage = j.value("stage", 0);
  l.block = j.value("block", 0);
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kFc:
      l.in_channels = j.at("in_channels").get<std::size_t>();
      l.out_channels = j.at("out_channels").get<std::size_t>();
      l.kernel = j.at("kernel").get<int>();
      l.stride = j.at("stride").get<int>();
      l.pad = j.at("pad").get<int>();
      l.bias = j.at("bias").get<bool>();
      break;
    case LayerKind::kBn:
    case LayerKind::kTdbn:
      l.in_channels = l.out_channels = j.at("channels").get<std::size_t>();
      break;
    case LayerKind::kAvgPool:
      l.kernel = j.at("kernel").get<int>();
      l.stride = l.kernel;
      break;
    case LayerKind::kResidualBlock:
      l.residual = j.at("residual").get<bool>();
      l.stride = j.at("stride").get<int>();
      l.in_channels = j.at("in_channels").get<std::size_t>();
      l.out_channels = j.at("out_channels").get<std::size_t>();
      for (const auto& c : j.at("branch")) l.branch.push_back(layer_spec_from_json(c));
      for (const auto& c : j.at("shortcut")) l.shortcut.push_back(layer_spec_from_json(c));
      break;
    case LayerKind::kTimeAdapter: {
      l.time_steps = j.at("time_steps").get<std::size_t>();
      const std::string p = j.at("policy").get<std::string>();
      if (p != "repeat" && p != "average") {
        throw ConfigError("unknown time adapter policy '" + p + "'");
      }
      l.policy = p == "repeat" ? TimePolicy::kRepeat : TimePolicy::kAverage;
      break;
    }
    default:
      break;
  }
  return l;
}

json to_json(const NetworkSpec& s) {
  json stages = json::array();
  for (const auto& st : s.stages) {
    stages.push_back(
        {{"residual_enabled", st.residual_enabled},
         {"time_steps_override", st.time_steps_override
                                     ? json(*st.time_steps_override)
                                     : json(nullptr)}});
  }
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return {{"family", to_string(s.family)},
          {"depth", s.depth},
          {"width_factor", s.width_factor},
          {"base_channels", s.base_channels},
          {"mode", to_string(s.mode)},
          {"time_steps", s.time_steps},
          {"num_classes", s.num_classes},
          {"input_channels", s.input_channels},
          {"image_size", s.image_size},
          {"lif", {{"tau", s.lif.tau}, {"v_th", s.lif.v_th}, {"alpha", s.lif.alpha}}},
          {"stages", stages},
          {"layers", layers}};
}

NetworkSpec network_spec_from_json(const json& j) {
  NetworkSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.depth = j.at("depth").get<int>();
  s.width_factor = j.at("width_factor").get<int>();
  s.base_channels = j.at("base_channels").get<std::size_t>();
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.time_steps = j.at("time_steps").get<std::size_t>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.input_channels = j.at("input_channels").get<std::size_t>();
  s.image_size = j.at("image_size").get<std::size_t>();
  const json& lif = j.at("lif");
  s.lif = {lif.at("tau").get<double>(), lif.at("v_th").get<double>(),
           lif.at("alpha").get<double>()};
  for (const auto& st : j.at("stages")) {
    StageFlags f;
    f.residual_enabled = st.at("residual_enabled").get<bool>();
    if (!st.at("time_steps_override").is_null()) {
      f.time_steps_override = st.at("time_steps_override").get<std::size_t>();
    }
    s.stages.push_back(f);
  }
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_spec_from_json(l));
  return s;
}

int resnet_blocks_per_stage(int depth) {
  if (depth < 8 || (depth - 2) % 6 != 0) {
    throw ConfigError("unsupported resnet depth " + std::to_string(depth) +
                      ": (depth - 2) must be a positive multiple of 6");
  }
  return (depth - 2) / 6;
}

std::vector<int> vgg_block_layout(int depth) {
  switch (depth) {
    case 13: return {1, 1, 2, 4};
    case 19: return {2, 2, 3, 8};
    case 25: return {2, 3, 4, 12};
    case 31: return {2, 4, 5, 16};
    case 43: return {2, 5, 6, 24};
    default:
      throw ConfigError("unsupported vgg depth " + std::to_string(depth) +
                        " (expected 13, 19, 25, 31 or 43)");
  }
}

namespace {

void validate_common(const ArchOptions& o) {
  if (o.width_factor < 1) throw ConfigError("width_factor must be >= 1");
  if (o.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (o.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (o.mode == Mode::kSnn) {
    if (o.time_steps < 1) throw ConfigError("snn time_steps must be >= 1");
    o.lif.validate();
  }
}

LayerSpec conv_spec(std::string name, std::size_t in, std::size_t out,
                    int kernel, int stride, int stage, int block) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.name = std::move(name);
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = kernel / 2;
  l.stage = stage;
  l.block = block;
  return l;
}

LayerSpec norm_spec(Mode mode, std::string name, std::size_t channels,
                    int stage, int block) {
  LayerSpec l;
  l.kind = mode == Mode::kSnn ? LayerKind::kTdbn : LayerKind::kBn;
  l.name = std::move(name);
  l.in_channels = l.out_channels = channels;
  l.stage = stage;
  l.block = block;
  return l;
}

LayerSpec act_spec(Mode mode, std::string name, int stage, int block) {
  LayerSpec l;
  l.kind = mode == Mode::kSnn ? LayerKind::kLif : LayerKind::kRelu;
  l.name = std::move(name);
  l.stage = stage;
  l.block = block;
  return l;
}

void append_head(std::vector<LayerSpec>& layers, const ArchOptions& o,
                 std::size_t channels, bool final_norm_act) {
  if (final_norm_act) {
    layers.push_back(norm_spec(o.mode, "final.bn", channels, 0, 0));
    layers.push_back(act_spec(o.mode, "final.act", 0, 0));
  }
  LayerSpec pool;
  pool.kind = LayerKind::kGlobalPool;
  pool.name = "pool";
  layers.push_back(pool);
  LayerSpec fc;
  fc.kind = LayerKind::kFc;
  fc.name = "fc";
  fc.in_channels = channels;
  fc.out_channels = o.num_classes;
  fc.bias = true;
  layers.push_back(fc);
}

}  // namespace

NetworkSpec build_resnet(const ArchOptions& o) {
  validate_common(o);
  const int blocks = resnet_blocks_per_stage(o.depth);
  if (o.image_size < 4 || o.image_size % 4 != 0) {
    throw ConfigError("resnet image_size must be a multiple of 4");
  }
  NetworkSpec s;
  s.family = Family::kResnet;
  s.depth = o.depth;
  s.width_factor = o.width_factor;
  s.base_channels = o.base_channels ? o.base_channels : 16;
  s.mode = o.mode;
  s.time_steps = o.mode == Mode::kSnn ? o.time_steps : 1;
  s.num_classes = o.num_classes;
  s.input_channels = o.input_channels;
  s.image_size = o.image_size;
  s.lif = o.lif;
  s.stages = o.stages.empty() ? std::vector<StageFlags>(3) : o.stages;
  if (s.stages.size() != 3) throw ConfigError("resnet expects 3 stage flag entries");

  std::vector<std::size_t> stage_steps(3, s.time_steps);
  for (int i = 0; i < 3; ++i) {
    if (const auto& ov = s.stages[i].time_steps_override) {
      if (o.mode == Mode::kAnn && *ov != 1) {
        throw ConfigError("ann networks cannot override stage time steps");
      }
      if (*ov < 1) throw ConfigError("stage time_steps_override must be >= 1");
      stage_steps[i] = o.mode == Mode::kAnn ? 1 : *ov;
    }
  }

  const Mode m = o.mode;
  const std::size_t c1 = s.base_channels * static_cast<std::size_t>(o.width_factor);
  auto& layers = s.layers;
  layers.push_back(conv_spec("conv1", o.input_channels, c1, 3, 1, 0, 0));
  layers.push_back(norm_spec(m, "conv1.bn", c1, 0, 0));
  layers.push_back(act_spec(m, "conv1.act", 0, 0));

  std::size_t in_ch = c1;
  for (int stage = 1; stage <= 3; ++stage) {
    if (stage > 1 && stage_steps[stage - 1] != stage_steps[stage - 2]) {
      const std::size_t prev = stage_steps[stage - 2], next = stage_steps[stage - 1];
      LayerSpec adapter;
      adapter.kind = LayerKind::kTimeAdapter;
      adapter.name = "s" + std::to_string(stage) + ".time";
      adapter.stage = stage;
      adapter.time_steps = next;
      if (prev == 1) {
        adapter.policy = TimePolicy::kRepeat;
      } else if (next == 1) {
        adapter.policy = TimePolicy::kAverage;
      } else {
        throw ConfigError("stage time steps " + std::to_string(prev) + " -> " +
                          std::to_string(next) +
                          " cannot be bridged (one side must be 1)");
      }
      layers.push_back(adapter);
    }
    const std::size_t ch = c1 << (stage - 1);
    for (int b = 1; b <= blocks; ++b) {
      const int stride = (stage > 1 && b == 1) ? 2 : 1;
      const std::string p = "s" + std::to_string(stage) + ".b" + std::to_string(b);
      LayerSpec block;
      block.kind = LayerKind::kResidualBlock;
      block.name = p;
      block.stage = stage;
      block.block = b;
      block.stride = stride;
      block.in_channels = in_ch;
      block.out_channels = ch;
      block.residual = s.stages[stage - 1].residual_enabled;
      block.branch = {
          norm_spec(m, p + ".bn1", in_ch, stage, b),
          act_spec(m, p + ".act1", stage, b),
          conv_spec(p + ".conv1", in_ch, ch, 3, stride, stage, b),
          norm_spec(m, p + ".bn2", ch, stage, b),
          act_spec(m, p + ".act2", stage, b),
          conv_spec(p + ".conv2", ch, ch, 3, 1, stage, b),
      };
      if (block.residual && (stride != 1 || in_ch != ch)) {
        block.shortcut = {
            conv_spec(p + ".proj", in_ch, ch, 1, stride, stage, b),
            norm_spec(m, p + ".proj_bn", ch, stage, b),
        };
      }
      layers.push_back(std::move(block));
      in_ch = ch;
    }
  }
  append_head(layers, o, in_ch, true);
  return s;
}

NetworkSpec build_vgg(const ArchOptions& o) {
  validate_common(o);
  const std::vector<int> layout = vgg_block_layout(o.depth);
  if (o.image_size < 8 || o.image_size % 8 != 0) {
    throw ConfigError("vgg image_size must be a multiple of 8");
  }
  for (const auto& st : o.stages) {
    if (!st.residual_enabled || st.time_steps_override) {
      throw ConfigError("vgg networks take no residual or time-step stage flags");
    }
  }
  NetworkSpec s;
  s.family = Family::kVgg;
  s.depth = o.depth;
  s.width_factor = o.width_factor;
  s.base_channels = o.base_channels ? o.base_channels : 64;
  s.mode = o.mode;
  s.time_steps = o.mode == Mode::kSnn ? o.time_steps : 1;
  s.num_classes = o.num_classes;
  s.input_channels = o.input_channels;
  s.image_size = o.image_size;
  s.lif = o.lif;

  std::size_t in_ch = o.input_channels;
  std::size_t ch = 0;
  for (int b = 1; b <= 4; ++b) {
    ch = (s.base_channels * static_cast<std::size_t>(o.width_factor)) << (b - 1);
    for (int j = 1; j <= layout[b - 1]; ++j) {
      const std::string p = "b" + std::to_string(b);
      const std::string idx = std::to_string(j);
      s.layers.push_back(conv_spec(p + ".conv" + idx, in_ch, ch, 3, 1, b, 0));
      s.layers.push_back(norm_spec(o.mode, p + ".bn" + idx, ch, b, 0));
      s.layers.push_back(act_spec(o.mode, p + ".act" + idx, b, 0));
      in_ch = ch;
    }
    if (b < 4) {
      LayerSpec pool;
      pool.kind = LayerKind::kAvgPool;
      pool.name = "pool" + std::to_string(b);
      pool.kernel = 2;
      pool.stride = 2;
      pool.stage = b;
      s.layers.push_back(pool);
    }
  }
  append_head(s.layers, o, ch, false);
  return s;
}

NetworkSpec build_network(const ArchOptions& options) {
  return options.family == Family::kResnet ? build_resnet(options)
                                           : build_vgg(options);
}

}  // namespace spikescope
