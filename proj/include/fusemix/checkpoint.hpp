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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusemix/adapter.hpp"
#include "fusemix/config.hpp"
#include "fusemix/optim.hpp"

namespace fusemix {

namespace fs = std::filesystem;

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_loss_xy = 0.0;
  double mean_loss_yx = 0.0;
  double logit_scale = 0.0;
  double lr = 0.0;  // at the epoch's last step
  double recall_xy_at1 = -1.0;  // -1 when not evaluated
  double recall_yx_at1 = -1.0;

  bool operator==(const EpochMetrics&) const = default;
};

// Binary layout: "FXCK", u32 version, then sections in fixed order, each
// u32 tag + u64 byte length + payload:
//   1 config (UTF-8 key/value text)   2 params_x (f32)   3 params_y (f32)
//   4 log_t (f64)   5 optimizer (u64 step, u64 slots, per slot u64 n,
//   f64 m[n], f64 v[n])   6 counters (u64 epoch, u64 step)   7 history
//   (u64 n, then 8 f64 per epoch record)
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Full training state after `epoch` completed epochs.
struct Checkpoint {
  TrainConfig config;
  AdapterParams<float> params_x;
  AdapterParams<float> params_y;
  double log_t = 0.0;
  OptimState optim;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<EpochMetrics> history;

  std::vector<unsigned char> serialize() const;
  static Checkpoint deserialize(const std::vector<unsigned char>& bytes);

  void save(const fs::path& path) const;
  static Checkpoint load(const fs::path& path);
};

/// Short content hash of a checkpoint file, used to label reports.
std::string checkpoint_id(const fs::path& path);

}  // namespace fusemix
