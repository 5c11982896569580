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

#include "spikescope/experiment.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "spikescope/adversarial.h"
#include "spikescope/cka.h"
#include "spikescope/data.h"
#include "spikescope/errors.h"
#include "spikescope/network.h"
#include "spikescope/train.h"

namespace spikescope {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<std::string>& recipes() {
  static const std::vector<std::string> kNames = {
      "train",          "heatmap", "diagonal", "cross-time", "residual-ablation",
      "time-sensitivity", "attack", "probe",    "init-study"};
  return kNames;
}

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

bool compatible(const json& def, const json& value) {
  if (def.is_number_float()) return value.is_number();
  if (def.is_number_unsigned() || def.is_number_integer()) {
    return value.is_number_integer() || value.is_number_unsigned();
  }
  if (def.is_array()) return value.is_array();
  return def.type() == value.type();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Blanks the named columns of a CSV so that timing data does not enter
// checksums.
std::string mask_csv_columns(const std::string& csv, const std::vector<std::string>& columns) {
  if (columns.empty()) return csv;
  std::istringstream in(csv);
  std::string line, out;
  std::vector<bool> masked;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (header) {
      for (const auto& name : fields) {
        masked.push_back(std::find(columns.begin(), columns.end(), name) != columns.end());
      }
      header = false;
    } else {
      for (std::size_t i = 0; i < fields.size() && i < masked.size(); ++i) {
        if (masked[i]) fields[i].clear();
      }
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += fields[i];
    }
    out.push_back('\n');
  }
  return out;
}

void atomic_write(const fs::path& target, const std::string& bytes) {
  fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
  }

  fs::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& bytes,
             std::vector<std::string> masked_columns = {}) {
    atomic_write(path(rel), bytes);
    record(rel, bytes, std::move(masked_columns));
  }

  void write_json(const std::string& rel, const json& value) {
    write(rel, value.dump(2) + "\n");
  }

  void save_network(const std::string& rel, const Network& net) {
    const fs::path target = path(rel);
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    net.save(tmp.string());
    fs::rename(tmp, target);
    record(rel, read_file(target), {});
  }

  void finalize(const std::string& recipe, const json& config,
                const std::vector<Gate>& gates) {
    json outputs = json::array();
    for (const auto& [rel, entry] : outputs_) outputs.push_back(entry);
    json g = json::array();
    bool ok = true;
    for (const auto& gate : gates) {
      g.push_back({{"name", gate.name}, {"passed", gate.passed}, {"detail", gate.detail}});
      ok = ok && gate.passed;
    }
    json manifest = {{"recipe", recipe},
                     {"config_sha256", sha256_hex(config.dump())},
                     {"outputs", outputs},
                     {"gates", g},
                     {"status", ok ? "pass" : "fail"}};
    atomic_write(path("manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  void record(const std::string& rel, const std::string& bytes,
              std::vector<std::string> masked) {
    json entry = {{"path", rel}, {"sha256", sha256_hex(mask_csv_columns(bytes, masked))}};
    // Masked files vary in length between runs.
    if (masked.empty()) {
      entry["bytes"] = bytes.size();
    } else {
      entry["checksum_masks_columns"] = masked;
    }
    outputs_[rel] = entry;
  }

  fs::path root_;
  std::map<std::string, json> outputs_;
};

// ---- Data and models -------------------------------------------------------

struct DataDims {
  std::size_t channels, image_size, classes;
};

DataDims data_dims(const json& d) {
  const std::string source = d.at("source");
  if (source == "synthetic") {
    return {d.at("channels"), d.at("image_size"), d.at("classes")};
  }
  if (source == "cifar10") return {3, 32, 10};
  if (source == "cifar100") return {3, 32, 100};
  if (source == "events") return {2, d.at("image_size"), d.at("classes")};
  throw ConfigError("data.source must be synthetic, cifar10, cifar100 or events");
}

DatasetSplits load_data(const json& d, std::uint64_t seed, std::size_t frames) {
  const std::string source = d.at("source");
  const std::uint64_t data_seed = Rng::derive(seed, "data");
  if (source == "synthetic") {
    SyntheticOptions o;
    o.n = d.at("n");
    o.class_count = d.at("classes");
    o.image_size = d.at("image_size");
    o.channels = d.at("channels");
    o.difficulty = parse_difficulty(d.at("difficulty"));
    o.seed = data_seed;
    return make_synthetic(o);
  }
  if (source == "cifar10" || source == "cifar100") {
    const auto variant = source == "cifar10" ? CifarVariant::kCifar10 : CifarVariant::kCifar100;
    const std::string path = d.at("path");
    if (path.empty()) throw ConfigError("data.path is required for CIFAR sources");
    DatasetSplits s;
    s.train = load_cifar_binary(path, "train", variant);
    s.test = load_cifar_binary(path, "test", variant, &s.train.norm);
    return s;
  }
  // Event streams: from a container file or generated, split 80/20.
  const std::string path = d.at("path");
  const std::size_t classes = d.at("classes");
  std::vector<EventStream> streams =
      path.empty() ? make_synthetic_events(d.at("n"), classes,
                                           d.at("sensor_size").get<std::uint16_t>(),
                                           d.at("events_per_stream"), data_seed)
                   : load_event_dataset(path);
  Rng rng(Rng::derive(seed, "data.split"));
  rng.shuffle(std::span<EventStream>(streams));
  const std::size_t n_train = streams.size() * 4 / 5;
  std::vector<EventStream> train(streams.begin(), streams.begin() + n_train);
  std::vector<EventStream> test(streams.begin() + n_train, streams.end());
  const std::size_t size = d.at("image_size");
  return {event_frames_dataset(train, frames, size, classes, "train"),
          event_frames_dataset(test, frames, size, classes, "test")};
}

struct Model {
  std::string label;
  std::unique_ptr<Network> net;
  double test_acc = 0.0;
  std::size_t frames = 1;
};

class Context {
 public:
  Context(const json& cfg)
      : cfg_(cfg), out_(cfg.at("output_dir").get<std::string>()),
        seed_(cfg.at("seed").get<std::uint64_t>()) {}

  const json& cfg() const { return cfg_; }
  OutputDir& out() { return out_; }
  std::uint64_t seed() const { return seed_; }

  const DatasetSplits& data(std::size_t frames) {
    if (cfg_["data"]["source"] != "events") frames = 1;
    auto it = data_.find(frames);
    if (it == data_.end()) {
      it = data_.emplace(frames, load_data(cfg_["data"], seed_, frames)).first;
    }
    return it->second;
  }

  ArchOptions arch(const json& m, Mode mode) const {
    const DataDims dims = data_dims(cfg_["data"]);
    ArchOptions a;
    a.family = parse_family(m.at("family"));
    a.depth = m.at("depth");
    a.width_factor = m.at("width_factor");
    a.base_channels = m.at("base_channels");
    a.mode = mode;
    a.time_steps = mode == Mode::kSnn ? m.at("time_steps").get<std::size_t>() : 1;
    a.num_classes = dims.classes;
    a.input_channels = dims.channels;
    a.image_size = dims.image_size;
    a.lif.tau = m["lif"].at("tau");
    a.lif.v_th = m["lif"].at("v_th");
    a.lif.alpha = m["lif"].at("alpha");
    const auto& residual = m.at("residual");
    const auto& steps = m.at("stage_time_steps");
    bool custom = false;
    std::vector<StageFlags> stages(3);
    for (std::size_t s = 0; s < 3; ++s) {
      stages[s].residual_enabled = residual.at(s).get<bool>();
      const std::size_t t = steps.at(s);
      if (mode == Mode::kSnn && t > 0) stages[s].time_steps_override = t;
      custom = custom || !stages[s].residual_enabled || stages[s].time_steps_override;
    }
    if (custom) a.stages = stages;
    return a;
  }

  // Loads `checkpoint` when given, otherwise trains a fresh model from the
  // config and stores it under models/<label>.ckpt.
  Model obtain(const std::string& label, Mode mode, const std::string& checkpoint,
               const json& model_cfg, std::uint64_t model_seed) {
    Model m;
    m.label = label;
    if (!checkpoint.empty()) {
      m.net = std::make_unique<Network>(Network::load(checkpoint));
      m.frames = m.net->input_time_steps();
      const auto& d = data(m.frames);
      if (m.net->spec().num_classes != d.test.class_count) {
        throw ConfigError("checkpoint " + checkpoint + " has " +
                          std::to_string(m.net->spec().num_classes) +
                          " classes, dataset has " + std::to_string(d.test.class_count));
      }
      m.test_acc = evaluate(*m.net, d.test);
      return m;
    }
    NetworkSpec spec = build_network(arch(model_cfg, mode));
    m.frames = spec.input_time_steps();
    m.net = std::make_unique<Network>(spec, Rng::derive(model_seed, "init." + label));
    const auto& d = data(m.frames);
    const json& t = cfg_["train"];
    TrainConfig tc;
    tc.epochs = t.at("epochs");
    tc.batch_size = t.at("batch_size");
    tc.lr = t.at("lr");
    tc.weight_decay = t.at("weight_decay");
    tc.momentum = t.at("momentum");
    tc.augment = t.at("augment");
    tc.seed = Rng::derive(model_seed, "train." + label);
    tc.precision = t.at("precision") == "float32" ? GemmPrecision::kFloat32
                                                  : GemmPrecision::kFloat64;
    TrainResult r = train(*m.net, d.train, d.test, tc);
    m.test_acc = evaluate(*m.net, d.test);
    out_.save_network("models/" + label + ".ckpt", *m.net);
    out_.write("models/" + label + "_train_log.csv", train_log_csv(r.log),
               {"wall_seconds"});
    return m;
  }

  Model obtain(const std::string& label, Mode mode, const std::string& checkpoint) {
    return obtain(label, mode, checkpoint, cfg_["model"], seed_);
  }

  RecordOptions record_options() const {
    const json& c = cfg_["cka"];
    RecordOptions o;
    o.n_examples = c.at("n");
    o.kinds = c.at("kinds").get<std::vector<std::string>>();
    o.seed = Rng::derive(seed_, "cka");
    o.batch_size = c.at("record_batch");
    o.feature_budget = c.at("feature_budget");
    o.subsample = c.at("subsample");
    return o;
  }

  HeatmapOptions heatmap_options() const {
    HeatmapOptions h;
    h.estimator = parse_estimator(cfg_["cka"].at("estimator"));
    h.batch_size = cfg_["cka"].at("batch_size");
    h.threads = cfg_.at("threads");
    return h;
  }

  std::vector<ActivationRecord> record(Model& m) {
    return record_activations(*m.net, data(m.frames).test, record_options());
  }

 private:
  json cfg_;
  OutputDir out_;
  std::uint64_t seed_;
  std::map<std::size_t, DatasetSplits> data_;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string csv_cell(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

Gate cka_range_gate(const CkaHeatmap& h) {
  Gate g{"cka_range", true, "all defined entries in [-0.05, 1 + 1e-9]"};
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    const auto& v = h.values[i];
    if (v && (*v < -0.05 || *v > 1.0 + 1e-9)) {
      g.passed = false;
      g.detail = "entry (" + h.rows[i / h.cols.size()].name + ", " +
                 h.cols[i % h.cols.size()].name + ") = " + fmt(*v);
      break;
    }
  }
  return g;
}

void write_heatmap(OutputDir& out, const std::string& stem, const CkaHeatmap& h) {
  out.write_json(stem + ".json", to_json(h));
  out.write(stem + ".csv", heatmap_csv(h));
  out.write(stem + ".pgm", heatmap_pgm(h));
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string s = "layer,kind,stage,block,cka\n";
  for (const auto& p : curve) {
    s += p.layer.name + "," + p.layer.kind + "," + std::to_string(p.layer.stage) + "," +
         std::to_string(p.layer.block) + "," + csv_cell(p.value) + "\n";
  }
  return s;
}

// Mean CKA at block outputs versus convolutions inside residual blocks.
json residual_summary(const std::vector<CurvePoint>& curve) {
  double bo = 0.0, cv = 0.0;
  std::size_t nb = 0, nc = 0, undefined = 0;
  for (const auto& p : curve) {
    if (!p.value) {
      ++undefined;
      continue;
    }
    if (p.layer.kind == "block_out") {
      bo += *p.value;
      ++nb;
    } else if (p.layer.kind == "conv" && p.layer.block > 0) {
      cv += *p.value;
      ++nc;
    }
  }
  json s = {{"undefined_layers", undefined}};
  s["block_out_mean"] = nb ? json(bo / nb) : json();
  s["intra_block_conv_mean"] = nc ? json(cv / nc) : json();
  s["restoration_gap"] = nb && nc ? json(bo / nb - cv / nc) : json();
  return s;
}

// ---- Recipes ---------------------------------------------------------------

RecipeOutcome recipe_train(Context& ctx) {
  RecipeOutcome r;
  const json& m = ctx.cfg()["model"];
  const Mode mode = parse_mode(m.at("mode"));
  Model model = ctx.obtain("model", mode, "");
  Network reloaded = Network::load(ctx.out().path("models/model.ckpt").string());
  const double again = evaluate(reloaded, ctx.data(model.frames).test);
  r.gates.push_back({"checkpoint_roundtrip", again == model.test_acc,
                     "reloaded accuracy " + fmt(again) + " vs " + fmt(model.test_acc)});
  r.summary = {{"family", m.at("family")},
               {"depth", m.at("depth")},
               {"width_factor", m.at("width_factor")},
               {"mode", to_string(mode)},
               {"time_steps", model.net->spec().time_steps},
               {"dataset", ctx.cfg()["data"].at("source")},
               {"difficulty", ctx.cfg()["data"].at("difficulty")},
               {"test_acc", model.test_acc}};
  return r;
}

RecipeOutcome recipe_heatmap(Context& ctx, bool with_diagonal) {
  RecipeOutcome r;
  const json& models = ctx.cfg()["models"];
  Model a = ctx.obtain("ann", Mode::kAnn, models.at("a"));
  Model b = ctx.obtain("snn", Mode::kSnn, models.at("b"));
  const auto ra = ctx.record(a);
  const auto rb = ctx.record(b);
  const CkaHeatmap h = cross_layer_heatmap(ra, rb, ctx.heatmap_options());
  write_heatmap(ctx.out(), "heatmap", h);
  r.gates.push_back(cka_range_gate(h));
  r.summary = {{"model_a", {{"mode", to_string(a.net->spec().mode)}, {"test_acc", a.test_acc}}},
               {"model_b", {{"mode", to_string(b.net->spec().mode)}, {"test_acc", b.test_acc}}},
               {"examples", h.examples}};
  if (with_diagonal) {
    const auto curve = diagonal_curve(h);
    ctx.out().write_json("diagonal.json", to_json(curve));
    ctx.out().write("diagonal.csv", curve_csv(curve));
    r.summary["diagonal"] = residual_summary(curve);
  }
  return r;
}

RecipeOutcome recipe_cross_time(Context& ctx) {
  RecipeOutcome r;
  Model s = ctx.obtain("snn", Mode::kSnn, ctx.cfg()["models"].at("a"));
  if (s.net->spec().mode != Mode::kSnn) {
    throw ConfigError("cross-time needs a spiking model");
  }
  RecordOptions o = ctx.record_options();
  o.kinds = ctx.cfg()["cross_time"].at("kinds").get<std::vector<std::string>>();
  const auto records = record_activations(*s.net, ctx.data(s.frames).test, o);
  const Estimator est = parse_estimator(ctx.cfg()["cross_time"].at("estimator"));
  json maps = json::array();
  std::map<int, std::pair<double, std::size_t>> stage_sums;
  Gate gate{"cross_time_symmetric_unit_diagonal", true, "biased estimator only"};
  for (const auto& rec : records) {
    if (rec.time_steps < 2) continue;
    const Tensor ct = cross_time_heatmap(rec, rec.time_steps, est);
    maps.push_back(cross_time_to_json(rec.layer, ct));
    const std::size_t t = rec.time_steps;
    double off = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        const double v = ct.at(i, j);
        if (std::isnan(v)) continue;
        if (est == Estimator::kBiased &&
            ((i == j && std::abs(v - 1.0) > 1e-9) ||
             (!std::isnan(ct.at(j, i)) && std::abs(v - ct.at(j, i)) > 1e-9))) {
          gate.passed = false;
          gate.detail = "layer " + rec.layer.name + " entry (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")";
        }
        if (i != j) {
          off += v;
          ++n;
        }
      }
    }
    if (n > 0 && rec.layer.stage > 0) {
      stage_sums[rec.layer.stage].first += off / n;
      stage_sums[rec.layer.stage].second += 1;
    }
  }
  ctx.out().write_json("cross_time.json", maps);
  json means = json::object();
  for (const auto& [stage, acc] : stage_sums) {
    means[std::to_string(stage)] = acc.first / acc.second;
  }
  r.gates.push_back(gate);
  r.summary = {{"test_acc", s.test_acc},
               {"stage_mean_offdiagonal", means},
               {"estimator", to_string(est)}};
  return r;
}

RecipeOutcome recipe_residual_ablation(Context& ctx) {
  RecipeOutcome r;
  const json& ab = ctx.cfg()["ablation"];
  const auto depths = ab.at("depths").get<std::vector<int>>();
  const auto modes = ab.at("modes").get<std::vector<std::string>>();
  const auto stages = ab.at("stages").get<std::vector<int>>();
  std::string table = "depth,mode,with_residual,without_residual,delta\n";
  json curves = json::array();
  Gate gate{"cka_range", true, "all defined entries in [-0.05, 1 + 1e-9]"};
  for (int depth : depths) {
    std::map<std::string, std::map<bool, Model>> trained;
    for (const std::string& mode_name : modes) {
      const Mode mode = parse_mode(mode_name);
      for (bool residual : {true, false}) {
        json m = ctx.cfg()["model"];
        m["depth"] = depth;
        if (!residual) {
          for (int s : stages) {
            if (s < 1 || s > 3) throw ConfigError("ablation.stages entries must be 1..3");
            m["residual"][s - 1] = false;
          }
        }
        const std::string label = mode_name + "_d" + std::to_string(depth) +
                                  (residual ? "_res" : "_nores");
        trained[mode_name][residual] = ctx.obtain(label, mode, "", m, ctx.seed());
      }
      const double with = trained[mode_name][true].test_acc;
      const double without = trained[mode_name][false].test_acc;
      table += std::to_string(depth) + "," + mode_name + "," + fmt(with) + "," +
               fmt(without) + "," + fmt(with - without) + "\n";
    }
    if (trained.count("ann") && trained.count("snn")) {
      for (bool residual : {true, false}) {
        const auto ra = ctx.record(trained["ann"][residual]);
        const auto rb = ctx.record(trained["snn"][residual]);
        const CkaHeatmap h = cross_layer_heatmap(ra, rb, ctx.heatmap_options());
        const Gate g = cka_range_gate(h);
        if (!g.passed) gate = g;
        const auto curve = diagonal_curve(h);
        curves.push_back({{"depth", depth},
                          {"residual", residual},
                          {"curve", to_json(curve)},
                          {"summary", residual_summary(curve)}});
      }
    }
  }
  ctx.out().write("table2.csv", table);
  ctx.out().write_json("ablation_cka.json", curves);
  r.gates.push_back(gate);
  r.summary = {{"depths", depths}, {"modes", modes}, {"disabled_stages", stages}};
  return r;
}

RecipeOutcome recipe_time_sensitivity(Context& ctx) {
  RecipeOutcome r;
  const json& ts = ctx.cfg()["time_sensitivity"];
  const std::size_t t = ts.at("t");
  const std::size_t reduced = ts.at("reduced_t");
  const std::string which = ts.at("stage");
  if (which != "first" && which != "last" && which != "both") {
    throw ConfigError("time_sensitivity.stage must be first, last or both");
  }
  struct Variant {
    std::string name;
    std::vector<std::size_t> steps;
  };
  std::vector<Variant> variants = {{"full", {t, t, t}}};
  if (which != "last") variants.push_back({"first_reduced", {reduced, t, t}});
  if (which != "first") variants.push_back({"last_reduced", {t, t, reduced}});
  std::string table = "variant,stage_time_steps,test_acc,drop\n";
  double full = 0.0;
  json accs = json::object();
  for (const auto& v : variants) {
    json m = ctx.cfg()["model"];
    m["time_steps"] = t;
    m["stage_time_steps"] = v.steps;
    Model model = ctx.obtain("snn_" + v.name, Mode::kSnn, "", m, ctx.seed());
    if (v.name == "full") full = model.test_acc;
    table += v.name + "," + std::to_string(v.steps[0]) + "-" + std::to_string(v.steps[1]) +
             "-" + std::to_string(v.steps[2]) + "," + fmt(model.test_acc) + "," +
             fmt(full - model.test_acc) + "\n";
    accs[v.name] = model.test_acc;
  }
  ctx.out().write("table3.csv", table);
  r.summary = {{"accuracy", accs}, {"t", t}, {"reduced_t", reduced}};
  return r;
}

SweepOptions sweep_options(const Context& ctx) {
  const json& a = ctx.cfg()["attack"];
  SweepOptions o;
  o.n_examples = a.at("n");
  o.batch_size = a.at("batch_size");
  o.iterations = a.at("iterations");
  o.step_ratio = a.at("step_ratio");
  o.random_start = a.at("random_start");
  o.seed = Rng::derive(ctx.seed(), "attack");
  return o;
}

RecipeOutcome recipe_attack(Context& ctx) {
  RecipeOutcome r;
  const json& models = ctx.cfg()["models"];
  const auto eps = ctx.cfg()["attack"].at("epsilons").get<std::vector<double>>();
  const SweepOptions so = sweep_options(ctx);
  Gate bound{"projection_bound", true, "max |x_adv - x| <= epsilon + 1e-7"};
  Gate identity{"epsilon_zero_identity", true, "epsilon 0 leaves accuracy and activations unchanged"};
  json summary = json::object();
  std::vector<Model> pair;
  pair.push_back(ctx.obtain("ann", Mode::kAnn, models.at("a")));
  pair.push_back(ctx.obtain("snn", Mode::kSnn, models.at("b")));
  for (Model& m : pair) {
    const std::string tag = to_string(m.net->spec().mode);
    const ImageDataset& test = ctx.data(m.frames).test;
    const auto rows = robustness_sweep(*m.net, test, eps, so);
    ctx.out().write("sweep_" + tag + ".csv", sweep_csv(rows));
    json drops = json::array();
    for (const auto& row : rows) {
      if (row.max_perturbation > row.epsilon + 1e-7) {
        bound.passed = false;
        bound.detail = tag + " at epsilon " + fmt(row.epsilon) + ": " + fmt(row.max_perturbation);
      }
      if (row.epsilon == 0.0 && row.adv_acc != row.clean_acc) {
        identity.passed = false;
        identity.detail = tag + " accuracy changed at epsilon 0";
      }
      drops.push_back({{"epsilon", row.epsilon},
                       {"clean_acc", row.clean_acc},
                       {"adv_acc", row.adv_acc},
                       {"drop", row.clean_acc - row.adv_acc}});
    }
    const auto curves = clean_vs_adv_cka(*m.net, test, eps, so, ctx.record_options(),
                                         ctx.heatmap_options());
    ctx.out().write_json("adv_cka_" + tag + ".json", to_json(curves));
    json curve_means = json::array();
    for (const auto& c : curves) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& p : c.curve) {
        if (!p.value) continue;
        sum += *p.value;
        ++n;
        if (c.epsilon == 0.0 && std::abs(*p.value - 1.0) > 1e-9) {
          identity.passed = false;
          identity.detail = tag + " CKA at epsilon 0, layer " + p.layer.name + " = " +
                            fmt(*p.value);
        }
      }
      curve_means.push_back({{"epsilon", c.epsilon}, {"mean_cka", n ? json(sum / n) : json()}});
    }
    summary[tag] = {{"test_acc", m.test_acc}, {"sweep", drops}, {"cka_means", curve_means}};
  }
  r.gates = {bound, identity};
  r.summary = summary;
  return r;
}

RecipeOutcome recipe_probe(Context& ctx) {
  RecipeOutcome r;
  const json& p = ctx.cfg()["probe"];
  const Mode mode = parse_mode(ctx.cfg()["model"].at("mode"));
  Model m = ctx.obtain(to_string(mode), mode, ctx.cfg()["models"].at("a"));
  const auto& d = ctx.data(m.frames);
  RecordOptions o = ctx.record_options();
  o.kinds = p.at("kinds").get<std::vector<std::string>>();
  const auto train_ids = select_examples(d.train.size(), p.at("n_train"),
                                         Rng::derive(ctx.seed(), "probe.train"));
  const auto test_ids = select_examples(d.test.size(), p.at("n_test"),
                                        Rng::derive(ctx.seed(), "probe.test"));
  const auto tr = record_activations(*m.net, d.train, train_ids, o);
  const auto te = record_activations(*m.net, d.test, test_ids, o);
  ProbeOptions po;
  po.iterations = p.at("iterations");
  const auto results = probe_layers(tr, gather_labels(d.train, train_ids), te,
                                    gather_labels(d.test, test_ids), d.test.class_count, po);
  std::string csv = "layer,kind,stage,block,train_acc,test_acc,degenerate\n";
  Gate gate{"probe_accuracy_range", true, "accuracies in [0, 1]"};
  for (const auto& res : results) {
    csv += res.layer.name + "," + res.layer.kind + "," + std::to_string(res.layer.stage) +
           "," + std::to_string(res.layer.block) + "," + fmt(res.train_acc) + "," +
           fmt(res.test_acc) + "," + (res.degenerate ? "true" : "false") + "\n";
    if (res.test_acc < 0.0 || res.test_acc > 1.0) gate.passed = false;
  }
  ctx.out().write("probe.csv", csv);
  r.gates.push_back(gate);
  r.summary = {{"mode", to_string(m.net->spec().mode)}, {"test_acc", m.test_acc}};
  return r;
}

RecipeOutcome recipe_init_study(Context& ctx) {
  RecipeOutcome r;
  const json& is = ctx.cfg()["init_study"];
  const auto seeds = is.at("seeds").get<std::vector<std::uint64_t>>();
  const Mode mode = parse_mode(is.at("mode"));
  if (seeds.size() < 2) throw ConfigError("init_study.seeds needs at least two seeds");
  std::vector<std::vector<ActivationRecord>> records;
  json accs = json::array();
  for (std::uint64_t s : seeds) {
    Model m = ctx.obtain(to_string(mode) + "_seed" + std::to_string(s), mode, "",
                         ctx.cfg()["model"], s);
    accs.push_back({{"seed", s}, {"test_acc", m.test_acc}});
    records.push_back(ctx.record(m));
  }
  Gate gate{"cka_range", true, "all defined entries in [-0.05, 1 + 1e-9]"};
  json pairs = json::array();
  for (std::size_t k = 1; k < seeds.size(); ++k) {
    const CkaHeatmap h = cross_layer_heatmap(records[0], records[k], ctx.heatmap_options());
    const Gate g = cka_range_gate(h);
    if (!g.passed) gate = g;
    write_heatmap(ctx.out(), "heatmap_seed" + std::to_string(seeds[0]) + "_seed" +
                                 std::to_string(seeds[k]), h);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& p : diagonal_curve(h)) {
      if (p.value) {
        sum += *p.value;
        ++n;
      }
    }
    pairs.push_back({{"seeds", {seeds[0], seeds[k]}},
                     {"mean_diagonal", n ? json(sum / n) : json()}});
  }
  r.gates.push_back(gate);
  r.summary = {{"models", accs}, {"pairs", pairs}};
  return r;
}

}  // namespace

std::vector<std::string> recipe_names() { return recipes(); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw InternalError("SHA-256 computation failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

json default_config() {
  return {
      {"recipe", ""},
      {"seed", 0},
      {"output_dir", "spikescope_out"},
      {"threads", 0},
      {"model",
       {{"family", "resnet"},
        {"depth", 8},
        {"width_factor", 1},
        {"base_channels", 8},
        {"mode", "snn"},
        {"time_steps", 4},
        {"lif", {{"tau", 0.5}, {"v_th", 1.0}, {"alpha", 1.0}}},
        {"residual", {true, true, true}},
        {"stage_time_steps", {0, 0, 0}}}},
      {"data",
       {{"source", "synthetic"},
        {"path", ""},
        {"n", 5120},
        {"image_size", 8},
        {"channels", 3},
        {"classes", 10},
        {"difficulty", "easy"},
        {"sensor_size", 32},
        {"events_per_stream", 2000}}},
      {"train",
       {{"epochs", 30},
        {"batch_size", 64},
        {"lr", 0.1},
        {"weight_decay", 1e-4},
        {"momentum", 0.9},
        {"augment", false},
        {"precision", "float32"}}},
      {"models", {{"a", ""}, {"b", ""}}},
      {"cka",
       {{"n", 256},
        {"estimator", "unbiased"},
        {"batch_size", 256},
        {"kinds", json::array()},
        {"subsample", false},
        {"feature_budget", 65536},
        {"record_batch", 128}}},
      {"attack",
       {{"epsilons", {0.0, 0.001, 0.005, 0.01, 0.02, 0.05}},
        {"iterations", 10},
        {"step_ratio", 2.5},
        {"random_start", true},
        {"n", 256},
        {"batch_size", 128}}},
      {"cross_time", {{"kinds", {"block_out"}}, {"estimator", "biased"}}},
      {"time_sensitivity", {{"stage", "both"}, {"t", 4}, {"reduced_t", 1}}},
      {"ablation", {{"depths", {8, 14}}, {"stages", {1, 2, 3}}, {"modes", {"ann", "snn"}}}},
      {"probe",
       {{"n_train", 512},
        {"n_test", 256},
        {"iterations", 300},
        {"kinds", json::array()}}},
      {"init_study", {{"seeds", {0, 1, 2}}, {"mode", "ann"}}},
  };
}

void merge_config(json& base, const json& overrides, const std::string& path) {
  if (!overrides.is_object()) {
    throw ConfigError("config " + (path.empty() ? std::string("root") : "field '" + path + "'") +
                      " must be an object");
  }
  for (const auto& [key, value] : overrides.items()) {
    const std::string field = join_path(path, key);
    if (!base.contains(key)) throw ConfigError("unknown config field '" + field + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, field);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config field '" + field + "' expects " + slot.type_name() +
                        ", got " + value.type_name());
    } else {
      slot = value;
    }
  }
}

void apply_override(json& config, const std::string& dotted, const std::string& text) {
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  // Strings that happen to parse (e.g. "1") stay strings where one is expected.
  json* slot = &config;
  std::string path;
  std::stringstream parts(dotted);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(parts, key, '.')) keys.push_back(key);
  if (keys.empty()) throw ConfigError("empty config override");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    path = join_path(path, keys[i]);
    if (!slot->is_object() || !slot->contains(keys[i])) {
      throw ConfigError("unknown config field '" + path + "'");
    }
    slot = &(*slot)[keys[i]];
  }
  if (slot->is_string() && !value.is_string()) value = text;
  if (slot->is_object()) throw ConfigError("config field '" + path + "' is a section");
  if (!compatible(*slot, value)) {
    throw ConfigError("config field '" + path + "' expects " + slot->type_name() +
                      ", got '" + text + "'");
  }
  *slot = value;
}

void validate_config(const json& c) {
  auto positive = [&](const json& v, const std::string& field) {
    if (!(v.get<double>() > 0)) throw ConfigError("config field '" + field + "' must be > 0");
  };
  const std::string recipe = c.at("recipe");
  if (std::find(recipes().begin(), recipes().end(), recipe) == recipes().end()) {
    throw ConfigError("unknown recipe '" + recipe + "'");
  }
  if (c.at("output_dir").get<std::string>().empty()) {
    throw ConfigError("config field 'output_dir' must not be empty");
  }
  const json& m = c["model"];
  parse_family(m.at("family"));
  parse_mode(m.at("mode"));
  positive(m.at("time_steps"), "model.time_steps");
  positive(m.at("width_factor"), "model.width_factor");
  if (m.at("residual").size() != 3) throw ConfigError("config field 'model.residual' needs 3 entries");
  if (m.at("stage_time_steps").size() != 3) {
    throw ConfigError("config field 'model.stage_time_steps' needs 3 entries");
  }
  data_dims(c["data"]);
  if (c["data"].at("source") == "synthetic") parse_difficulty(c["data"].at("difficulty"));
  const json& t = c["train"];
  positive(t.at("epochs"), "train.epochs");
  positive(t.at("lr"), "train.lr");
  if (t.at("precision") != "float32" && t.at("precision") != "float64") {
    throw ConfigError("config field 'train.precision' must be float32 or float64");
  }
  if (t.at("batch_size").get<long>() < 2) {
    throw ConfigError("config field 'train.batch_size' must be >= 2");
  }
  parse_estimator(c["cka"].at("estimator"));
  parse_estimator(c["cross_time"].at("estimator"));
  positive(c["cka"].at("n"), "cka.n");
  const auto eps = c["attack"].at("epsilons").get<std::vector<double>>();
  if (!std::is_sorted(eps.begin(), eps.end()) || (!eps.empty() && eps.front() < 0)) {
    throw ConfigError("config field 'attack.epsilons' must be non-negative and ascending");
  }
  positive(c["attack"].at("iterations"), "attack.iterations");
  positive(c["attack"].at("n"), "attack.n");
  positive(c["time_sensitivity"].at("t"), "time_sensitivity.t");
  positive(c["time_sensitivity"].at("reduced_t"), "time_sensitivity.reduced_t");
}

RecipeOutcome run_recipe(const std::string& recipe, const json& config) {
  json cfg = config;
  cfg["recipe"] = recipe;
  validate_config(cfg);
  Context ctx(cfg);
  ctx.out().write_json("config.json", cfg);
  RecipeOutcome r;
  if (recipe == "train") {
    r = recipe_train(ctx);
  } else if (recipe == "heatmap") {
    r = recipe_heatmap(ctx, false);
  } else if (recipe == "diagonal") {
    r = recipe_heatmap(ctx, true);
  } else if (recipe == "cross-time") {
    r = recipe_cross_time(ctx);
  } else if (recipe == "residual-ablation") {
    r = recipe_residual_ablation(ctx);
  } else if (recipe == "time-sensitivity") {
    r = recipe_time_sensitivity(ctx);
  } else if (recipe == "attack") {
    r = recipe_attack(ctx);
  } else if (recipe == "probe") {
    r = recipe_probe(ctx);
  } else {
    r = recipe_init_study(ctx);
  }
  r.summary["recipe"] = recipe;
  ctx.out().write_json("summary.json", r.summary);
  ctx.out().finalize(recipe, cfg, r.gates);
  r.exit_code = kExitOk;
  for (const auto& g : r.gates) {
    if (!g.passed) r.exit_code = kExitGateFailed;
  }
  return r;
}

// ---- Report ----------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::string s;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s += "|";
    for (const auto& f : rows[r]) s += " " + f + " |";
    s += "\n";
    if (r == 0) {
      s += "|";
      for (std::size_t i = 0; i < rows[0].size(); ++i) s += " --- |";
      s += "\n";
    }
  }
  return s;
}

std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
    s += "\n";
  }
  return s;
}

}  // namespace

int write_report(const std::string& dir, std::vector<std::string>* missing_out) {
  if (!fs::is_directory(dir)) throw IoError("report directory " + dir + " does not exist");
  std::vector<fs::path> runs;
  if (fs::exists(fs::path(dir) / "manifest.json")) runs.push_back(dir);
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  runs.insert(runs.end(), subdirs.begin(), subdirs.end());

  std::vector<std::string> missing;
  // Accuracy per (family, depth, width, dataset, difficulty) and mode.
  std::map<std::vector<std::string>, std::map<std::string, double>> acc;
  std::vector<std::vector<std::string>> table2, table3;
  std::string sections;
  for (const auto& run : runs) {
    const json manifest = json::parse(read_file(run / "manifest.json"));
    for (const auto& o : manifest.at("outputs")) {
      if (!fs::exists(run / o.at("path").get<std::string>())) {
        missing.push_back((run / o.at("path").get<std::string>()).string());
      }
    }
    const std::string recipe = manifest.at("recipe");
    const std::string name = fs::relative(run, dir).string();
    sections += "- `" + name + "`: " + recipe + ", gates " +
                manifest.at("status").get<std::string>() + "\n";
    if (recipe == "train" && fs::exists(run / "summary.json")) {
      const json s = json::parse(read_file(run / "summary.json"));
      std::vector<std::string> key = {s.at("family").get<std::string>(),
                                      std::to_string(s.at("depth").get<int>()),
                                      std::to_string(s.at("width_factor").get<int>()),
                                      s.at("dataset").get<std::string>(),
                                      s.at("difficulty").get<std::string>()};
      acc[key][s.at("mode").get<std::string>()] = s.at("test_acc").get<double>();
    }
    if (recipe == "residual-ablation" && fs::exists(run / "table2.csv")) {
      auto rows = read_csv(run / "table2.csv");
      if (table2.empty() && !rows.empty()) table2.push_back(rows[0]);
      table2.insert(table2.end(), rows.begin() + std::min<std::size_t>(1, rows.size()), rows.end());
    }
    if (recipe == "time-sensitivity" && fs::exists(run / "table3.csv")) {
      auto rows = read_csv(run / "table3.csv");
      if (table3.empty() && !rows.empty()) table3.push_back(rows[0]);
      table3.insert(table3.end(), rows.begin() + std::min<std::size_t>(1, rows.size()), rows.end());
    }
  }

  std::vector<std::vector<std::string>> table1;
  if (!acc.empty()) {
    table1.push_back({"family", "depth", "width_factor", "dataset", "difficulty", "ann_acc",
                      "snn_acc", "delta_ann_minus_snn"});
    for (const auto& [key, modes] : acc) {
      auto row = key;
      const auto a = modes.find("ann"), s = modes.find("snn");
      row.push_back(a != modes.end() ? fmt(a->second) : "");
      row.push_back(s != modes.end() ? fmt(s->second) : "");
      row.push_back(a != modes.end() && s != modes.end() ? fmt(a->second - s->second) : "");
      table1.push_back(row);
    }
  }

  std::string md = "# Spikescope report\n\n";
  if (!sections.empty()) md += "## Runs\n\n" + sections + "\n";
  if (!table1.empty()) {
    md += "## Accuracy: ANN vs SNN\n\n" + markdown_table(table1) + "\n";
    atomic_write(fs::path(dir) / "table1.csv", to_csv(table1));
  }
  if (!table2.empty()) {
    md += "## Residual connections\n\n" + markdown_table(table2) + "\n";
    atomic_write(fs::path(dir) / "table2.csv", to_csv(table2));
  }
  if (!table3.empty()) {
    md += "## Reduced time steps per stage\n\n" + markdown_table(table3) + "\n";
    atomic_write(fs::path(dir) / "table3.csv", to_csv(table3));
  }
  if (!missing.empty()) {
    md += "## Missing artifacts\n\n";
    for (const auto& m : missing) md += "- " + m + "\n";
  }
  atomic_write(fs::path(dir) / "report.md", md);
  if (missing_out) *missing_out = missing;
  return missing.empty() ? kExitOk : kExitRuntime;
}

}  // namespace spikescope
