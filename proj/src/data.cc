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

#include "spikescope/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "binary_io.h"
#include "spikescope/errors.h"

namespace spikescope {
namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;

std::size_t per_example(const ImageDataset& data) {
  return data.size() == 0 ? 0 : data.images.numel() / data.size();
}

std::size_t channel_plane(const ImageDataset& data) {
  const std::size_t s = data.image_size();
  return s * s;
}

}  // namespace

void ImageDataset::validate() const {
  const std::size_t expected_rank = frames > 1 ? 5 : 4;
  if (images.rank() != expected_rank) {
    throw ConfigError("dataset images must have rank " +
                      std::to_string(expected_rank) + ", got " +
                      shape_str(images.shape()));
  }
  if (images.dim(0) != labels.size()) {
    throw ConfigError("dataset has " + std::to_string(images.dim(0)) +
                      " images but " + std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at index " +
                        std::to_string(i) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
  }
}

Tensor gather_examples(const ImageDataset& data, std::span<const std::size_t> ids) {
  const std::size_t stride = per_example(data);
  Shape shape = data.images.shape();
  shape[0] = ids.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= data.size()) {
      throw ConfigError("example index " + std::to_string(ids[i]) +
                        " out of range");
    }
    std::copy_n(data.images.raw() + ids[i] * stride, stride, out.raw() + i * stride);
  }
  return out;
}

std::vector<int> gather_labels(const ImageDataset& data,
                               std::span<const std::size_t> ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(data.labels.at(id));
  return out;
}

NormStats compute_norm_stats(const ImageDataset& raw_train) {
  const std::size_t channels = raw_train.channels();
  const std::size_t plane = channel_plane(raw_train);
  const std::size_t groups = raw_train.images.numel() / (channels * plane);
  NormStats stats;
  stats.mean.assign(channels, 0.0);
  stats.stddev.assign(channels, 0.0);
  const double count = static_cast<double>(groups * plane);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
      const double* p = raw_train.images.raw() + (g * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) sum += p[k];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
      const double* p = raw_train.images.raw() + (g * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - mean) * (p[k] - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(sq / count), 1e-8);
  }
  return stats;
}

void normalize(ImageDataset& data, const NormStats& stats) {
  const std::size_t channels = data.channels();
  if (stats.mean.size() != channels || stats.stddev.size() != channels) {
    throw ConfigError("normalization stats have " +
                      std::to_string(stats.mean.size()) + " channels, data has " +
                      std::to_string(channels));
  }
  const std::size_t plane = channel_plane(data);
  const std::size_t groups = data.images.numel() / (channels * plane);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = data.images.raw() + (g * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        p[k] = (p[k] - stats.mean[c]) / stats.stddev[c];
      }
    }
  }
  data.norm = stats;
  data.min_value.resize(channels);
  data.max_value.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    data.min_value[c] = (0.0 - stats.mean[c]) / stats.stddev[c];
    data.max_value[c] = (1.0 - stats.mean[c]) / stats.stddev[c];
  }
}

// ---- CIFAR -----------------------------------------------------------------

CifarRecords read_cifar_file(const std::string& path, CifarVariant variant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " (byte offset 0)");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::size_t label_bytes = variant == CifarVariant::kCifar100 ? 2 : 1;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.size() % record != 0) {
    throw IoError("truncated CIFAR record in " + path + " at byte offset " +
                  std::to_string(bytes.size() / record * record));
  }
  const std::size_t n = bytes.size() / record;
  CifarRecords out;
  out.variant = variant;
  out.labels.resize(n);
  out.pixels.resize(n * kCifarPixels);
  if (label_bytes == 2) out.coarse_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* r = bytes.data() + i * record;
    if (label_bytes == 2) {
      out.coarse_labels[i] = r[0];
      out.labels[i] = r[1];
    } else {
      out.labels[i] = r[0];
    }
    std::copy_n(r + label_bytes, kCifarPixels, out.pixels.data() + i * kCifarPixels);
  }
  return out;
}

void write_cifar_file(const std::string& path, const CifarRecords& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const bool fine = records.variant == CifarVariant::kCifar100;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (fine) out.put(static_cast<char>(records.coarse_labels.at(i)));
    out.put(static_cast<char>(records.labels[i]));
    out.write(reinterpret_cast<const char*>(records.pixels.data() + i * kCifarPixels),
              kCifarPixels);
  }
  if (!out) throw IoError("write failed for " + path);
}

ImageDataset cifar_to_dataset(const CifarRecords& records, const std::string& split) {
  ImageDataset data;
  data.split = split;
  data.class_count = records.variant == CifarVariant::kCifar100 ? 100 : 10;
  data.images = Tensor({records.size(), 3, 32, 32});
  for (std::size_t i = 0; i < records.pixels.size(); ++i) {
    data.images[i] = records.pixels[i] / 255.0;
  }
  data.labels.assign(records.labels.begin(), records.labels.end());
  data.validate();
  return data;
}

ImageDataset load_cifar_binary(const std::string& path, const std::string& split,
                               CifarVariant variant, const NormStats* stats) {
  if (split != "train" && stats == nullptr) {
    throw ConfigError("split '" + split +
                      "' must be normalized with statistics from the train split");
  }
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    fs::path dir = path;
    const char* nested = variant == CifarVariant::kCifar100 ? "cifar-100-binary"
                                                            : "cifar-10-batches-bin";
    if (fs::is_directory(dir / nested)) dir /= nested;
    if (variant == CifarVariant::kCifar100) {
      files.push_back((dir / (split == "train" ? "train.bin" : "test.bin")).string());
    } else if (split == "train") {
      for (int b = 1; b <= 5; ++b) {
        files.push_back((dir / ("data_batch_" + std::to_string(b) + ".bin")).string());
      }
    } else {
      files.push_back((dir / "test_batch.bin").string());
    }
  } else {
    files.push_back(path);
  }
  CifarRecords all;
  all.variant = variant;
  for (const std::string& f : files) {
    CifarRecords part = read_cifar_file(f, variant);
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    all.coarse_labels.insert(all.coarse_labels.end(), part.coarse_labels.begin(),
                             part.coarse_labels.end());
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  ImageDataset data = cifar_to_dataset(all, split);
  normalize(data, stats ? *stats : compute_norm_stats(data));
  return data;
}

// ---- Synthetic images ------------------------------------------------------

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "hard") return Difficulty::kHard;
  throw ConfigError("unknown difficulty '" + s + "' (expected easy or hard)");
}

namespace {

struct Blob {
  double cx, cy, sigma;
  std::vector<double> color;
};

void paint_blob(double* image, std::size_t channels, std::size_t size,
                const Blob& b, double dx, double dy, double amp) {
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double rx = x - (b.cx + dx);
      const double ry = y - (b.cy + dy);
      const double g = amp * std::exp(-(rx * rx + ry * ry) * inv);
      for (std::size_t c = 0; c < channels; ++c) {
        image[(c * size + y) * size + x] += g * b.color[c];
      }
    }
  }
}

}  // namespace

DatasetSplits make_synthetic(const SyntheticOptions& o) {
  if (o.class_count < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (o.n < 2 * o.class_count) {
    throw ConfigError("synthetic n=" + std::to_string(o.n) +
                      " must be at least 2 * class_count");
  }
  if (o.image_size < 4 || o.channels == 0) {
    throw ConfigError("synthetic images need size >= 4 and >= 1 channel");
  }
  const bool hard = o.difficulty == Difficulty::kHard;
  const double s = static_cast<double>(o.image_size);
  constexpr std::size_t kBlobs = 3;

  Rng proto_rng(Rng::derive(o.seed, "synthetic.prototypes"));
  std::vector<std::vector<Blob>> protos(o.class_count);
  for (auto& blobs : protos) {
    for (std::size_t k = 0; k < kBlobs; ++k) {
      Blob b;
      b.cx = proto_rng.uniform(0.15, 0.85) * s;
      b.cy = proto_rng.uniform(0.15, 0.85) * s;
      b.sigma = proto_rng.uniform(0.08, 0.2) * s;
      for (std::size_t c = 0; c < o.channels; ++c) {
        b.color.push_back(proto_rng.uniform(-0.45, 0.45));
      }
      blobs.push_back(std::move(b));
    }
  }

  std::vector<int> labels(o.n);
  for (std::size_t i = 0; i < o.n; ++i) labels[i] = static_cast<int>(i % o.class_count);
  Rng order_rng(Rng::derive(o.seed, "synthetic.order"));
  order_rng.shuffle(std::span<int>(labels));

  const double jitter = (hard ? 0.15 : 0.04) * s;
  const double amp_spread = hard ? 0.5 : 0.1;
  const double noise = hard ? 0.25 : 0.05;
  const std::size_t stride = o.channels * o.image_size * o.image_size;
  Tensor images({o.n, o.channels, o.image_size, o.image_size}, 0.5);
  Rng rng(Rng::derive(o.seed, "synthetic.examples"));
  for (std::size_t i = 0; i < o.n; ++i) {
    double* img = images.raw() + i * stride;
    const auto& blobs = protos[labels[i]];
    for (const Blob& b : blobs) {
      const double dx = rng.uniform(-jitter, jitter);
      const double dy = rng.uniform(-jitter, jitter);
      const double amp = rng.uniform(1.0 - amp_spread, 1.0 + amp_spread);
      paint_blob(img, o.channels, o.image_size, b, dx, dy, amp);
    }
    if (hard) {
      // One distractor blob borrowed from another class.
      const std::size_t other =
          (labels[i] + 1 + rng.below(o.class_count - 1)) % o.class_count;
      const Blob& b = protos[other][rng.below(kBlobs)];
      paint_blob(img, o.channels, o.image_size, b, rng.uniform(-jitter, jitter),
                 rng.uniform(-jitter, jitter), rng.uniform(0.3, 0.8));
    }
    for (std::size_t k = 0; k < stride; ++k) {
      img[k] = std::clamp(img[k] + noise * rng.normal(), 0.0, 1.0);
    }
  }

  const std::size_t n_train = o.n * 4 / 5;
  const std::size_t n_test = o.n - n_train;
  DatasetSplits out;
  auto fill = [&](ImageDataset& d, const char* split, std::size_t begin,
                  std::size_t count) {
    d.split = split;
    d.class_count = o.class_count;
    d.images = Tensor({count, o.channels, o.image_size, o.image_size});
    std::copy_n(images.raw() + begin * stride, count * stride, d.images.raw());
    d.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  };
  fill(out.train, "train", 0, n_train);
  fill(out.test, "test", n_train, n_test);
  const NormStats stats = compute_norm_stats(out.train);
  normalize(out.train, stats);
  normalize(out.test, stats);
  return out;
}

// ---- Events ----------------------------------------------------------------

void EventStream::validate() const {
  if (t_end < t_start) {
    throw FormatError("stream window ends (" + std::to_string(t_end) +
                      ") before it starts (" + std::to_string(t_start) + ")");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (i > 0 && e.t < events[i - 1].t) {
      throw FormatError("timestamp regression at event index " + std::to_string(i));
    }
    if (e.t < t_start || e.t > t_end) {
      throw FormatError("event index " + std::to_string(i) +
                        " lies outside the stream window");
    }
    if (e.x >= width || e.y >= height) {
      throw FormatError("event index " + std::to_string(i) +
                        " lies outside the sensor extents");
    }
    if (e.polarity > 1) {
      throw FormatError("event index " + std::to_string(i) + " has polarity " +
                        std::to_string(e.polarity));
    }
  }
}

Tensor integrate_events(const EventStream& stream, std::size_t n_frames,
                        bool normalize) {
  if (n_frames == 0) throw ConfigError("n_frames must be at least 1");
  const std::size_t h = stream.height;
  const std::size_t w = stream.width;
  Tensor frames({n_frames, 2, h, w});
  const std::uint64_t duration = stream.t_end - stream.t_start;
  for (const Event& e : stream.events) {
    std::size_t f = n_frames - 1;
    if (duration > 0) {
      const unsigned __int128 scaled =
          static_cast<unsigned __int128>(e.t - stream.t_start) * n_frames;
      f = std::min<std::size_t>(static_cast<std::size_t>(scaled / duration),
                                n_frames - 1);
    }
    frames.at(f, e.polarity, e.y, e.x) += 1.0;
  }
  if (normalize) {
    const std::size_t per_frame = 2 * h * w;
    for (std::size_t f = 0; f < n_frames; ++f) {
      double* p = frames.raw() + f * per_frame;
      const double peak = *std::max_element(p, p + per_frame);
      if (peak > 0.0) {
        for (std::size_t k = 0; k < per_frame; ++k) p[k] /= peak;
      }
    }
  }
  return frames;
}

std::vector<EventStream> load_event_dataset(const std::string& path) {
  using detail::read_le;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " (byte offset 0)");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<EventStream> streams;
  if (size == 0) return streams;
  char magic[4];
  if (!in.read(magic, 4)) throw IoError("truncated header at byte offset 0");
  if (std::string(magic, 4) != "SPKE") {
    throw FormatError(path + " is not an event container (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != 1) {
    throw FormatError("unsupported event container version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(in, "stream count");
  for (std::uint32_t s = 0; s < count; ++s) {
    EventStream st;
    st.width = read_le<std::uint16_t>(in, "width");
    st.height = read_le<std::uint16_t>(in, "height");
    st.label = read_le<std::int32_t>(in, "label");
    st.t_start = read_le<std::uint64_t>(in, "t_start");
    st.t_end = read_le<std::uint64_t>(in, "t_end");
    const auto n = read_le<std::uint64_t>(in, "event count");
    const auto remaining = static_cast<std::uint64_t>(size - in.tellg());
    if (n > remaining / 16) {
      throw IoError("event count " + std::to_string(n) + " exceeds file size at byte offset " +
                    std::to_string(static_cast<long long>(in.tellg())));
    }
    st.events.resize(n);
    for (auto& e : st.events) {
      e.t = read_le<std::uint64_t>(in, "event timestamp");
      e.x = read_le<std::uint16_t>(in, "event x");
      e.y = read_le<std::uint16_t>(in, "event y");
      e.polarity = read_le<std::uint8_t>(in, "event polarity");
      char pad[3];
      if (!in.read(pad, 3)) {
        throw IoError("truncated event padding at byte offset " +
                      std::to_string(static_cast<long long>(size)));
      }
    }
    try {
      st.validate();
    } catch (const FormatError& e) {
      throw FormatError("stream " + std::to_string(s) + ": " + e.what());
    }
    streams.push_back(std::move(st));
  }
  return streams;
}

void save_event_dataset(const std::string& path,
                        const std::vector<EventStream>& streams) {
  using detail::write_le;
  for (const auto& s : streams) s.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("SPKE", 4);
  write_le<std::uint32_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(streams.size()));
  for (const auto& s : streams) {
    write_le(out, s.width);
    write_le(out, s.height);
    write_le(out, s.label);
    write_le(out, s.t_start);
    write_le(out, s.t_end);
    write_le<std::uint64_t>(out, s.events.size());
    for (const Event& e : s.events) {
      write_le(out, e.t);
      write_le(out, e.x);
      write_le(out, e.y);
      write_le(out, e.polarity);
      const char pad[3] = {0, 0, 0};
      out.write(pad, 3);
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<EventStream> make_synthetic_events(std::size_t n_streams,
                                               std::size_t class_count,
                                               std::uint16_t sensor_size,
                                               std::size_t events_per_stream,
                                               std::uint64_t seed) {
  if (class_count < 1 || sensor_size < 4) {
    throw ConfigError("synthetic events need >= 1 class and sensor size >= 4");
  }
  constexpr std::uint64_t kDuration = 100000;
  const double s = sensor_size;
  std::vector<EventStream> streams;
  Rng rng(Rng::derive(seed, "synthetic.events"));
  for (std::size_t i = 0; i < n_streams; ++i) {
    EventStream st;
    st.width = st.height = sensor_size;
    st.label = static_cast<std::int32_t>(i % class_count);
    st.t_start = 0;
    st.t_end = kDuration;
    const double angle = 2.0 * std::numbers::pi * st.label / class_count;
    const double vx = std::cos(angle);
    const double vy = std::sin(angle);
    const double cx = s / 2 + rng.uniform(-0.1, 0.1) * s;
    const double cy = s / 2 + rng.uniform(-0.1, 0.1) * s;
    std::vector<std::uint64_t> times(events_per_stream);
    for (auto& t : times) t = rng.below(kDuration + 1);
    std::sort(times.begin(), times.end());
    for (std::uint64_t t : times) {
      const double phase = static_cast<double>(t) / kDuration - 0.5;
      const double ox = rng.normal(0.0, 0.08 * s);
      const double oy = rng.normal(0.0, 0.08 * s);
      const double px = cx + 0.5 * s * phase * vx + ox;
      const double py = cy + 0.5 * s * phase * vy + oy;
      Event e;
      e.t = t;
      e.x = static_cast<std::uint16_t>(std::clamp(std::floor(px), 0.0, s - 1));
      e.y = static_cast<std::uint16_t>(std::clamp(std::floor(py), 0.0, s - 1));
      bool leading = ox * vx + oy * vy > 0.0;
      if (rng.uniform() < 0.1) leading = !leading;
      e.polarity = leading ? 1 : 0;
      st.events.push_back(e);
    }
    streams.push_back(std::move(st));
  }
  return streams;
}

ImageDataset event_frames_dataset(const std::vector<EventStream>& streams,
                                  std::size_t n_frames, std::size_t image_size,
                                  std::size_t class_count, const std::string& split) {
  if (image_size == 0) throw ConfigError("image_size must be positive");
  ImageDataset data;
  data.split = split;
  data.class_count = class_count;
  data.frames = n_frames;
  const std::size_t n = streams.size();
  const std::size_t plane = image_size * image_size;
  Shape shape = n_frames > 1 ? Shape{n, n_frames, 2, image_size, image_size}
                             : Shape{n, 2, image_size, image_size};
  data.images = Tensor(shape);
  for (std::size_t i = 0; i < n; ++i) {
    const EventStream& st = streams[i];
    if (st.width != st.height || st.width % image_size != 0) {
      throw ConfigError("sensor " + std::to_string(st.width) + "x" +
                        std::to_string(st.height) + " cannot be pooled to " +
                        std::to_string(image_size));
    }
    const std::size_t factor = st.width / image_size;
    Tensor frames = integrate_events(st, n_frames);
    double* dst = data.images.raw() + i * n_frames * 2 * plane;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t f = 0; f < n_frames * 2; ++f) {
      const double* src = frames.raw() + f * st.width * st.width;
      for (std::size_t y = 0; y < image_size; ++y) {
        for (std::size_t x = 0; x < image_size; ++x) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < factor; ++dy) {
            for (std::size_t dx = 0; dx < factor; ++dx) {
              acc += src[(y * factor + dy) * st.width + x * factor + dx];
            }
          }
          dst[f * plane + y * image_size + x] = acc * inv;
        }
      }
    }
    data.labels.push_back(st.label);
  }
  data.norm = NormStats{{0.0, 0.0}, {1.0, 1.0}};
  data.min_value = {0.0, 0.0};
  data.max_value = {1.0, 1.0};
  data.validate();
  return data;
}

// ---- Augmentation ----------------------------------------------------------

Tensor augment_crop_flip(const Tensor& images, Rng& rng, int pad) {
  if (images.rank() != 4) {
    throw ConfigError("augmentation expects [N, C, H, W], got " +
                      shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0), c = images.dim(1);
  const long h = static_cast<long>(images.dim(2));
  const long w = static_cast<long>(images.dim(3));
  Tensor out(images.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const long oy = static_cast<long>(rng.below(2 * pad + 1)) - pad;
    const long ox = static_cast<long>(rng.below(2 * pad + 1)) - pad;
    const bool flip = rng.below(2) == 1;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (long y = 0; y < h; ++y) {
        const long sy = y + oy;
        if (sy < 0 || sy >= h) continue;
        for (long x = 0; x < w; ++x) {
          const long cx = flip ? w - 1 - x : x;
          const long sx = cx + ox;
          if (sx < 0 || sx >= w) continue;
          out.at(i, ch, y, x) = images.at(i, ch, sy, sx);
        }
      }
    }
  }
  return out;
}

}  // namespace spikescope
