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

#include "fusemix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fusemix {

namespace {

constexpr char kMagic[4] = {'F', 'X', 'C', 'K'};

enum Section : std::uint32_t {
  kConfig = 1,
  kParamsX = 2,
  kParamsY = 3,
  kLogT = 4,
  kOptimizer = 5,
  kCounters = 6,
  kHistory = 7,
};

class Writer {
 public:
  template <class U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void begin(Section tag) {
    put<std::uint32_t>(tag);
    len_at_ = buf_.size();
    put<std::uint64_t>(0);
  }
  void end() {
    const std::uint64_t len = buf_.size() - len_at_ - 8;
    for (std::size_t i = 0; i < 8; ++i) buf_[len_at_ + i] = static_cast<unsigned char>(len >> (8 * i));
  }
  std::vector<unsigned char> take() { return std::move(buf_); }

 private:
  std::vector<unsigned char> buf_;
  std::size_t len_at_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  /// Opens the next section, which must carry `tag`; returns its length.
  std::uint64_t section(Section tag) {
    const auto t = get<std::uint32_t>();
    require(t == tag, "corrupt checkpoint: expected section " + std::to_string(tag) + ", found " +
                          std::to_string(t));
    const auto len = get<std::uint64_t>();
    need(len);
    section_end_ = pos_ + len;
    return len;
  }
  void close_section() {
    require(pos_ == section_end_, "corrupt checkpoint: section length mismatch");
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    require(n <= b_.size() - pos_, "corrupt checkpoint: unexpected end of file");
  }
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
  std::size_t section_end_ = 0;
};

void write_params(Writer& w, Section tag, const AdapterParams<float>& p) {
  w.begin(tag);
  for (float v : flatten(p)) w.put_f32(v);
  w.end();
}

AdapterParams<float> read_params(Reader& r, Section tag, const AdapterConfig& config) {
  const auto len = r.section(tag);
  require(len % 4 == 0, "corrupt checkpoint: parameter section not a multiple of 4 bytes");
  std::vector<float> flat(len / 4);
  for (auto& v : flat) v = r.get_f32();
  r.close_section();
  return unflatten<float>(config, flat);
}

}  // namespace

std::vector<unsigned char> Checkpoint::serialize() const {
  Writer w;
  for (char c : kMagic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
  w.put<std::uint32_t>(kCheckpointVersion);

  w.begin(kConfig);
  w.put_bytes(config.to_text());
  w.end();
  write_params(w, kParamsX, params_x);
  write_params(w, kParamsY, params_y);
  w.begin(kLogT);
  w.put_f64(log_t);
  w.end();

  w.begin(kOptimizer);
  w.put<std::uint64_t>(optim.step);
  w.put<std::uint64_t>(optim.slots.size());
  for (const auto& s : optim.slots) {
    w.put<std::uint64_t>(s.m.size());
    for (double v : s.m) w.put_f64(v);
    for (double v : s.v) w.put_f64(v);
  }
  w.end();

  w.begin(kCounters);
  w.put<std::uint64_t>(epoch);
  w.put<std::uint64_t>(step);
  w.end();

  w.begin(kHistory);
  w.put<std::uint64_t>(history.size());
  for (const auto& h : history) {
    w.put_f64(static_cast<double>(h.epoch));
    for (double v : {h.mean_loss, h.mean_loss_xy, h.mean_loss_yx, h.logit_scale, h.lr,
                     h.recall_xy_at1, h.recall_yx_at1})
      w.put_f64(v);
  }
  w.end();
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= 8 && std::memcmp(bytes.data(), kMagic, 4) == 0,
          "corrupt checkpoint: bad magic");
  Reader r(bytes);
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, "checkpoint version mismatch: " + std::to_string(version));

  Checkpoint ck;
  const auto clen = r.section(kConfig);
  ck.config = TrainConfig::parse(r.get_string(clen));
  r.close_section();
  ck.config.validate();
  ck.params_x = read_params(r, kParamsX, ck.config.adapter_x);
  ck.params_y = read_params(r, kParamsY, ck.config.adapter_y);

  r.section(kLogT);
  ck.log_t = r.get_f64();
  r.close_section();

  r.section(kOptimizer);
  ck.optim.step = r.get<std::uint64_t>();
  ck.optim.slots.resize(r.get<std::uint64_t>());
  for (auto& s : ck.optim.slots) {
    const auto n = r.get<std::uint64_t>();
    s.m.resize(n);
    s.v.resize(n);
    for (auto& v : s.m) v = r.get_f64();
    for (auto& v : s.v) v = r.get_f64();
  }
  r.close_section();

  r.section(kCounters);
  ck.epoch = r.get<std::uint64_t>();
  ck.step = r.get<std::uint64_t>();
  r.close_section();

  r.section(kHistory);
  ck.history.resize(r.get<std::uint64_t>());
  for (auto& h : ck.history) {
    h.epoch = static_cast<std::size_t>(r.get_f64());
    h.mean_loss = r.get_f64();
    h.mean_loss_xy = r.get_f64();
    h.mean_loss_yx = r.get_f64();
    h.logit_scale = r.get_f64();
    h.lr = r.get_f64();
    h.recall_xy_at1 = r.get_f64();
    h.recall_yx_at1 = r.get_f64();
  }
  r.close_section();
  require(r.at_end(), "corrupt checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const fs::path& path) const {
  const auto bytes = serialize();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "I/O failure writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize(bytes);
}

std::string checkpoint_id(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace fusemix
