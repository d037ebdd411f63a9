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

#include "fusemix/latent_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fusemix/random.hpp"

namespace fusemix {

namespace {

using json = nlohmann::json;

template <class U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

LatentHeader parse_header(const unsigned char* p, std::size_t n, const fs::path& path) {
  require(n >= kLatentHeaderSize, "truncated latent file " + path.string() + ": header incomplete");
  require(std::memcmp(p, kLatentMagic.data(), 4) == 0, "bad magic in " + path.string());
  LatentHeader h;
  h.version = get_le<std::uint32_t>(p + 4);
  require(h.version == kLatentVersion,
          "version mismatch in " + path.string() + ": " + std::to_string(h.version));
  h.dim = get_le<std::uint32_t>(p + 8);
  h.count = get_le<std::uint64_t>(p + 12);
  const char* tag = reinterpret_cast<const char*>(p + 20);
  h.modality_tag.assign(tag, strnlen(tag, kModalityTagSize));
  return h;
}

std::uint64_t parse_hex64(const std::string& s) {
  require(!s.empty() && s.size() <= 16 &&
              s.find_first_not_of("0123456789abcdefABCDEF") == std::string::npos,
          "manifest: malformed checksum '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

}  // namespace

std::uint64_t write_latent_file(const fs::path& path, const MatrixF& rows,
                                const std::string& modality_tag) {
  require(rows.rows() >= 1, "empty store");
  require(rows.all_finite(), "non-finite value in latents for " + path.string());
  require(modality_tag.size() <= kModalityTagSize, "modality tag longer than 16 bytes");
  std::vector<unsigned char> bytes;
  bytes.reserve(kLatentHeaderSize + 4 * rows.size());
  bytes.insert(bytes.end(), kLatentMagic.begin(), kLatentMagic.end());
  put_le<std::uint32_t>(bytes, kLatentVersion);
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(rows.cols()));
  put_le<std::uint64_t>(bytes, rows.rows());
  std::array<char, kModalityTagSize> tag{};
  std::copy(modality_tag.begin(), modality_tag.end(), tag.begin());
  bytes.insert(bytes.end(), tag.begin(), tag.end());
  for (float v : rows.values()) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "I/O failure writing " + path.string());
  return fnv1a64(bytes.data(), bytes.size());
}

LatentHeader read_latent_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::array<unsigned char, kLatentHeaderSize> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  return parse_header(buf.data(), static_cast<std::size_t>(in.gcount()), path);
}

MatrixF read_latent_file(const fs::path& path, LatentHeader* header) {
  const auto bytes = read_bytes(path);
  const LatentHeader h = parse_header(bytes.data(), bytes.size(), path);
  const std::size_t expected = kLatentHeaderSize + 4 * static_cast<std::size_t>(h.count) * h.dim;
  require(bytes.size() >= expected, "truncated latent file " + path.string() + ": expected " +
                                        std::to_string(expected) + " bytes, found " +
                                        std::to_string(bytes.size()));
  require(bytes.size() == expected, "trailing bytes in latent file " + path.string());
  MatrixF rows(h.count, h.dim);
  const unsigned char* p = bytes.data() + kLatentHeaderSize;
  for (std::size_t i = 0; i < rows.size(); ++i, p += 4) {
    rows[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
    require(std::isfinite(rows[i]), "non-finite value in " + path.string());
  }
  if (header) *header = h;
  return rows;
}

std::uint64_t file_checksum(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string PairManifest::to_json() const {
  json j = {{"format", "fxls-pair-manifest"},
            {"version", 1},
            {"path_x", path_x},
            {"path_y", path_y},
            {"count", count},
            {"checksum_x", hex64(checksum_x)},
            {"checksum_y", hex64(checksum_y)}};
  if (!groups.empty()) j["groups"] = groups;
  return j.dump(2) + "\n";
}

PairManifest PairManifest::from_json(const std::string& text) {
  PairManifest m;
  try {
    const json j = json::parse(text);
    m.path_x = j.at("path_x").get<std::string>();
    m.path_y = j.at("path_y").get<std::string>();
    m.count = j.at("count").get<std::uint64_t>();
    m.checksum_x = parse_hex64(j.at("checksum_x").get<std::string>());
    m.checksum_y = parse_hex64(j.at("checksum_y").get<std::string>());
    if (j.contains("groups")) m.groups = j.at("groups").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  require(m.groups.empty() || m.groups.size() == m.count,
          "manifest: groups length does not match count");
  return m;
}

PairManifest write_store(const MatrixF& rows_x, const MatrixF& rows_y,
                         const std::array<std::string, 2>& tags, const fs::path& out_dir,
                         const std::vector<std::uint64_t>& groups) {
  require(rows_x.rows() >= 1 && rows_y.rows() >= 1, "empty store");
  require(rows_x.rows() == rows_y.rows(), "mismatched row counts: " + std::to_string(rows_x.rows()) +
                                              " vs " + std::to_string(rows_y.rows()));
  require(rows_x.all_finite() && rows_y.all_finite(), "non-finite value in latents");
  require(groups.empty() || groups.size() == rows_x.rows(), "groups length does not match count");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, "cannot create " + out_dir.string() + ": " + ec.message());
  PairManifest m;
  m.path_x = kFileX;
  m.path_y = kFileY;
  m.count = rows_x.rows();
  m.checksum_x = write_latent_file(out_dir / kFileX, rows_x, tags[0]);
  m.checksum_y = write_latent_file(out_dir / kFileY, rows_y, tags[1]);
  m.groups = groups;
  std::ofstream out(out_dir / kManifestName, std::ios::trunc);
  out << m.to_json();
  require(static_cast<bool>(out), "I/O failure writing manifest in " + out_dir.string());
  return m;
}

StoreHandle StoreHandle::open(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  require(static_cast<bool>(in), "cannot open manifest " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  StoreHandle h;
  h.manifest_ = PairManifest::from_json(ss.str());
  h.manifest_path_ = manifest_path;
  const fs::path dir = manifest_path.parent_path();
  const fs::path px = dir / h.manifest_.path_x;
  const fs::path py = dir / h.manifest_.path_y;

  LatentHeader hx, hy;
  h.x_ = read_latent_file(px, &hx);
  h.y_ = read_latent_file(py, &hy);
  require(hx.count == h.manifest_.count && hy.count == h.manifest_.count,
          "count mismatch: manifest " + std::to_string(h.manifest_.count) + ", x file " +
              std::to_string(hx.count) + ", y file " + std::to_string(hy.count));
  require(file_checksum(px) == h.manifest_.checksum_x, "checksum mismatch for " + px.string());
  require(file_checksum(py) == h.manifest_.checksum_y, "checksum mismatch for " + py.string());
  h.tags_ = {hx.modality_tag, hy.modality_tag};
  return h;
}

StoreHandle StoreHandle::from_matrices(MatrixF x, MatrixF y, std::array<std::string, 2> tags) {
  require(x.rows() >= 1 && x.rows() == y.rows(), "store: row counts must match and be positive");
  StoreHandle h;
  h.manifest_.count = x.rows();
  h.tags_ = std::move(tags);
  h.x_ = std::move(x);
  h.y_ = std::move(y);
  return h;
}

Batch StoreHandle::gather(const std::vector<std::size_t>& indices) const {
  Batch b{MatrixF(indices.size(), dim_x()), MatrixF(indices.size(), dim_y()), indices};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] < count(), "store: row index out of range");
    std::copy_n(x_.row(indices[r]).begin(), dim_x(), b.z_x.row(r).begin());
    std::copy_n(y_.row(indices[r]).begin(), dim_y(), b.z_y.row(r).begin());
  }
  return b;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

EpochBatches::EpochBatches(const StoreHandle& store, std::size_t batch_rows, std::uint64_t seed)
    : store_(&store), batch_rows_(batch_rows) {
  require(batch_rows >= 1, "batch size must be positive");
  require(batch_rows <= store.count(), "batch of " + std::to_string(batch_rows) +
                                           " rows exceeds store count " +
                                           std::to_string(store.count()));
  order_ = permutation(store.count(), seed);
}

std::vector<std::size_t> EpochBatches::indices(std::size_t i) const {
  require(i < size(), "epoch batch index out of range");
  return {order_.begin() + static_cast<std::ptrdiff_t>(i * batch_rows_),
          order_.begin() + static_cast<std::ptrdiff_t>((i + 1) * batch_rows_)};
}

namespace {

/// dim x k matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
MatrixD orthonormal_columns(std::size_t dim, std::size_t k, Rng& rng) {
  MatrixD u(dim, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (;;) {
      std::vector<double> v(dim);
      for (auto& e : v) e = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < c; ++p) {
          double dot = 0.0;
          for (std::size_t r = 0; r < dim; ++r) dot += v[r] * u(r, p);
          for (std::size_t r = 0; r < dim; ++r) v[r] -= dot * u(r, p);
        }
      }
      double norm = 0.0;
      for (double e : v) norm += e * e;
      norm = std::sqrt(norm);
      if (norm < 1e-8) continue;
      for (std::size_t r = 0; r < dim; ++r) u(r, c) = v[r] / norm;
      break;
    }
  }
  return u;
}

}  // namespace

SynthPairs synth_aligned(std::size_t n, std::size_t dim_x, std::size_t dim_y,
                         std::size_t dim_latent, double noise_sigma, std::uint64_t seed) {
  require(n >= 1 && dim_latent >= 1, "synth: count and latent dimension must be positive");
  require(dim_latent <= std::min(dim_x, dim_y), "synth: latent dimension exceeds min(dx, dy)");
  require(noise_sigma >= 0.0, "synth: noise must be non-negative");
  Rng map_rng(derive_seed(seed, Stream::kSynth, 0));
  const MatrixD ux = orthonormal_columns(dim_x, dim_latent, map_rng);
  const MatrixD uy = orthonormal_columns(dim_y, dim_latent, map_rng);
  Rng code_rng(derive_seed(seed, Stream::kSynth, 1));
  Rng noise_rng(derive_seed(seed, Stream::kSynth, 2));
  SynthPairs out{MatrixF(n, dim_x), MatrixF(n, dim_y)};
  std::vector<double> code(dim_latent);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& c : code) c = code_rng.normal();
    for (std::size_t r = 0; r < dim_x; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim_latent; ++k) s += ux(r, k) * code[k];
      out.x(i, r) = static_cast<float>(s);
    }
    for (std::size_t r = 0; r < dim_y; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim_latent; ++k) s += uy(r, k) * code[k];
      if (noise_sigma > 0.0) s += noise_sigma * noise_rng.normal();
      out.y(i, r) = static_cast<float>(s);
    }
  }
  return out;
}

}  // namespace fusemix
