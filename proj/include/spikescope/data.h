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

#ifndef SPIKESCOPE_DATA_H_
#define SPIKESCOPE_DATA_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikescope/tensor.h"

namespace spikescope {

// Per-channel normalization computed on a training split.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct ImageDataset {
  // [N, C, H, W] for static images, [N, F, C, H, W] for frame sequences.
  Tensor images;
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::string split;
  std::size_t frames = 1;
  NormStats norm;
  // Valid per-channel range of normalized values (the image of [0, 1]).
  std::vector<double> min_value;
  std::vector<double> max_value;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(frames > 1 ? 2 : 1); }
  std::size_t image_size() const { return images.dim(frames > 1 ? 3 : 2); }
  void validate() const;
};

struct DatasetSplits {
  ImageDataset train;
  ImageDataset test;
};

// Copies the selected examples, keeping the per-example layout.
Tensor gather_examples(const ImageDataset& data, std::span<const std::size_t> ids);
std::vector<int> gather_labels(const ImageDataset& data,
                               std::span<const std::size_t> ids);

NormStats compute_norm_stats(const ImageDataset& raw_train);
// Maps raw [0, 1] values to (v - mean) / std and records the valid range.
void normalize(ImageDataset& data, const NormStats& stats);

// ---- CIFAR binary ----------------------------------------------------------

enum class CifarVariant { kCifar10, kCifar100 };

// Raw records: label byte(s) followed by 3072 pixel bytes (R, G, B planes).
struct CifarRecords {
  CifarVariant variant = CifarVariant::kCifar10;
  std::vector<std::uint8_t> coarse_labels;  // CIFAR-100 only
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  // size() * 3072
  std::size_t size() const { return labels.size(); }
};

CifarRecords read_cifar_file(const std::string& path, CifarVariant variant);
void write_cifar_file(const std::string& path, const CifarRecords& records);

// Loads a split from a directory in the canonical layout (data_batch_1..5.bin
// and test_batch.bin for CIFAR-10; train.bin and test.bin for CIFAR-100) or
// from a single .bin file. The train split normalizes with its own
// statistics; any other split requires `stats` from the train split.
ImageDataset load_cifar_binary(const std::string& path, const std::string& split,
                               CifarVariant variant = CifarVariant::kCifar10,
                               const NormStats* stats = nullptr);
ImageDataset cifar_to_dataset(const CifarRecords& records, const std::string& split);

// ---- Synthetic images ------------------------------------------------------

enum class Difficulty { kEasy, kHard };
Difficulty parse_difficulty(const std::string& s);

struct SyntheticOptions {
  std::size_t n = 1280;
  std::size_t class_count = 10;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  Difficulty difficulty = Difficulty::kEasy;
  std::uint64_t seed = 0;
};

// Class-conditional Gaussian-blob images, 80/20 train/test split, normalized
// with train statistics. Deterministic in the seed.
DatasetSplits make_synthetic(const SyntheticOptions& options);

// ---- Event streams ---------------------------------------------------------

struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;
  bool operator==(const Event&) const = default;
};

struct EventStream {
  std::vector<Event> events;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::int32_t label = 0;
  // Recording window; events lie in [t_start, t_end].
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;

  // Throws FormatError naming the first offending event.
  void validate() const;
  bool operator==(const EventStream&) const = default;
};

// Splits [t_start, t_end] into n_frames equal windows (half-open, last one
// closed) and counts events per window and polarity into [n_frames, 2, H, W].
// With `normalize`, each frame is divided by its maximum count when positive.
Tensor integrate_events(const EventStream& stream, std::size_t n_frames,
                        bool normalize = true);

// Event container, little-endian:
//   magic "SPKE" | u32 version (1) | u32 stream count | per stream:
//   u16 width | u16 height | i32 label | u64 t_start | u64 t_end |
//   u64 event count | events of 16 bytes (u64 t, u16 x, u16 y, u8 polarity,
//   3 zero bytes).
// A zero-length file holds no streams.
std::vector<EventStream> load_event_dataset(const std::string& path);
void save_event_dataset(const std::string& path,
                        const std::vector<EventStream>& streams);

// Blobs drifting in a class-specific direction; polarity follows the motion.
std::vector<EventStream> make_synthetic_events(std::size_t n_streams,
                                               std::size_t class_count,
                                               std::uint16_t sensor_size,
                                               std::size_t events_per_stream,
                                               std::uint64_t seed);

// Integrates every stream into n_frames frames and average-pools them to
// image_size (which must divide the sensor extent). n_frames == 1 yields a
// static [N, 2, S, S] dataset, otherwise [N, F, 2, S, S].
ImageDataset event_frames_dataset(const std::vector<EventStream>& streams,
                                  std::size_t n_frames, std::size_t image_size,
                                  std::size_t class_count, const std::string& split);

// ---- Augmentation ----------------------------------------------------------

// Random crop from a zero-padded image (pad 4) and random horizontal flip,
// applied per example. images: [N, C, H, W].
Tensor augment_crop_flip(const Tensor& images, Rng& rng, int pad = 4);

}  // namespace spikescope

#endif  // SPIKESCOPE_DATA_H_
