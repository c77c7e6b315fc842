// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nsnet/array.hpp"
#include "nsnet/rng.hpp"

namespace nsnet {

namespace fs = std::filesystem;

/// One video: its label and per-frame arrays, all sharing leading dimension N.
struct VideoRecord {
  std::string video_id;
  std::size_t label = 0;
  Array light_features;     // N x D_l
  Array guiding_features;   // N x D_g
  Array recognizer_logits;  // N x C
  std::optional<Array> saliency_mask;  // N, entries in {0, 1}

  std::size_t num_frames() const { return light_features.rows(); }
  /// Throws ContractError when the record breaks its invariants for C classes.
  void validate(std::size_t num_classes) const;
};

struct ManifestEntry {
  std::string video_id;
  std::size_t label = 0;
  fs::path light_path;
  fs::path guiding_path;
  fs::path logits_path;
  std::optional<fs::path> mask_path;
};

/// NSM1 text manifest. Paths are stored relative to the manifest directory.
struct DatasetManifest {
  std::string split;
  std::size_t num_classes = 0;
  std::vector<ManifestEntry> records;
  fs::path base_dir;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

// NSF1: "NSF1" | u32 N | u32 D | N*D little-endian float32, row-major.
void write_feature_file(const fs::path& path, const Array& matrix);
Array read_feature_file(const fs::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void atomic_write(const fs::path& path, const std::string& bytes);
std::string read_file_bytes(const fs::path& path);
/// FNV-1a 64-bit digest, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const DatasetManifest& manifest);

/// Loads every record referenced by the manifest and checks that all agree on
/// D_l, D_g and C.
std::vector<VideoRecord> load_records(const DatasetManifest& manifest);

/// Writes one NSF1 file per array under `dir` plus an NSM1 manifest at
/// `dir/<split>.nsm`; returns the manifest as written.
DatasetManifest write_dataset(const fs::path& dir, const std::string& split, std::size_t num_classes,
                              const std::vector<VideoRecord>& records);

struct PresampleConfig {
  std::size_t num_frames = 16;  // T
  bool shift_augment = false;
};

/// Segment-centre indices floor((i + 0.5) * N / T) for N >= T, cyclic tiling
/// for N < T. With shift augmentation a shared offset o in [0, floor(N/T)] is
/// added and indices are clamped to N - 1.
std::vector<std::size_t> presample_indices(std::size_t n, const PresampleConfig& cfg, Rng* rng = nullptr);

VideoRecord gather_frames(const VideoRecord& record, const std::vector<std::size_t>& indices);
VideoRecord presample(const VideoRecord& record, const PresampleConfig& cfg, Rng* rng = nullptr);

struct SyntheticConfig {
  std::size_t num_classes = 10;
  std::size_t videos_per_class = 20;
  std::size_t val_videos_per_class = 0;
  std::size_t num_frames = 16;  // N
  std::size_t light_dim = 32;
  std::size_t guiding_dim = 32;
  double salient_fraction = 0.25;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> val;
  Array light_centroids;    // C x D_l
  Array guiding_centroids;  // C x D_g
};

/// Planted-saliency dataset: salient frames sit at their class centroid plus
/// Gaussian noise, the rest at background centroids; recognizer logits are
/// negated guiding-space distances to the class centroids.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace nsnet
