// Copyright 2026 The fusemix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusemix/matrix.hpp"

namespace fusemix {

namespace fs = std::filesystem;

// On-disk layout of one latent file (all integers little-endian):
//   0..3   "FXLS"
//   4..7   version (u32) = 1
//   8..11  dim (u32)
//   12..19 count (u64)
//   20..35 modality tag, ASCII, zero padded
//   36..   count * dim f32, row-major
inline constexpr std::array<char, 4> kLatentMagic = {'F', 'X', 'L', 'S'};
inline constexpr std::uint32_t kLatentVersion = 1;
inline constexpr std::size_t kLatentHeaderSize = 36;
inline constexpr std::size_t kModalityTagSize = 16;

struct LatentHeader {
  std::uint32_t version = kLatentVersion;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  std::string modality_tag;
};

/// Writes one latent file and returns the checksum of the bytes written.
std::uint64_t write_latent_file(const fs::path& path, const MatrixF& rows,
                                const std::string& modality_tag);
LatentHeader read_latent_header(const fs::path& path);
/// Reads and validates a whole latent file.
MatrixF read_latent_file(const fs::path& path, LatentHeader* header = nullptr);

/// FNV-1a 64 over every byte of the file.
std::uint64_t file_checksum(const fs::path& path);

/// Index-aligned pairing of two latent files. Paths are stored relative to
/// the manifest's directory. `groups` optionally assigns a semantic id to each
/// row; rows sharing an id are mutual positives during retrieval evaluation.
struct PairManifest {
  std::string path_x;
  std::string path_y;
  std::uint64_t count = 0;
  std::uint64_t checksum_x = 0;
  std::uint64_t checksum_y = 0;
  std::vector<std::uint64_t> groups;

  std::string to_json() const;
  static PairManifest from_json(const std::string& text);
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kFileX = "x.fxls";
inline constexpr const char* kFileY = "y.fxls";

/// Writes x.fxls, y.fxls and manifest.json into out_dir.
PairManifest write_store(const MatrixF& rows_x, const MatrixF& rows_y,
                         const std::array<std::string, 2>& tags, const fs::path& out_dir,
                         const std::vector<std::uint64_t>& groups = {});

/// A 2B-row slice of paired latents.
struct Batch {
  MatrixF z_x;
  MatrixF z_y;
  std::vector<std::size_t> indices;
};

/// Validated, fully loaded store. Read-only after construction.
class StoreHandle {
 public:
  static StoreHandle open(const fs::path& manifest_path);
  /// In-memory store, used for held-out splits and tests.
  static StoreHandle from_matrices(MatrixF x, MatrixF y, std::array<std::string, 2> tags = {"x", "y"});

  std::size_t count() const { return x_.rows(); }
  std::size_t dim_x() const { return x_.cols(); }
  std::size_t dim_y() const { return y_.cols(); }
  const MatrixF& x() const { return x_; }
  const MatrixF& y() const { return y_; }
  const PairManifest& manifest() const { return manifest_; }
  const fs::path& manifest_path() const { return manifest_path_; }
  const std::array<std::string, 2>& tags() const { return tags_; }

  Batch gather(const std::vector<std::size_t>& indices) const;

 private:
  PairManifest manifest_;
  fs::path manifest_path_;
  std::array<std::string, 2> tags_;
  MatrixF x_;
  MatrixF y_;
};

/// Seed-determined permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

/// One epoch of batches: floor(count / batch_rows) batches drawn without
/// replacement from a shuffled order, trailing partial batch dropped.
class EpochBatches {
 public:
  EpochBatches(const StoreHandle& store, std::size_t batch_rows, std::uint64_t seed);

  std::size_t size() const { return order_.size() / batch_rows_; }
  std::vector<std::size_t> indices(std::size_t i) const;
  Batch operator[](std::size_t i) const { return store_->gather(indices(i)); }

 private:
  const StoreHandle* store_;
  std::size_t batch_rows_;
  std::vector<std::size_t> order_;
};

inline EpochBatches epoch_batches(const StoreHandle& store, std::size_t batch_rows,
                                  std::uint64_t seed) {
  return EpochBatches(store, batch_rows, seed);
}

struct SynthPairs {
  MatrixF x;
  MatrixF y;
};

/// Paired data sharing a D_latent-dimensional code: x = U_x c, y = U_y c + noise,
/// with seed-determined orthonormal-column maps U_x, U_y.
SynthPairs synth_aligned(std::size_t n, std::size_t dim_x, std::size_t dim_y,
                         std::size_t dim_latent, double noise_sigma, std::uint64_t seed);

}  // namespace fusemix
