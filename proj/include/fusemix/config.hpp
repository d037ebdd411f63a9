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
#include <map>
#include <optional>
#include <string>

#include "fusemix/adapter.hpp"
#include "fusemix/augment.hpp"
#include "fusemix/objective.hpp"
#include "fusemix/optim.hpp"

namespace fusemix {

struct LossConfig {
  double init_logit_scale = Temperature::kDefaultInitScale;
  double max_logit_scale = Temperature::kDefaultMaxScale;
  bool learnable_t = true;

  bool operator==(const LossConfig&) const = default;
};

/// Everything that determines a training run. Defaults follow the
/// image-text recipe (depth 4, lr 1e-3, weight decay 0.1, B = 20K, 500
/// epochs); `audio_text()` gives the audio recipe.
struct TrainConfig {
  std::size_t batch_b = 20000;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  AdapterConfig adapter_x;
  AdapterConfig adapter_y;
  MixConfig augment;
  OptimConfig optim;
  LossConfig loss;
  std::size_t checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  std::size_t eval_every = 0;        // epochs; 0 disables in-training evaluation
  std::optional<std::uint64_t> warmup_steps;  // default: one epoch
  std::string eval_manifest;

  static TrainConfig image_text();
  static TrainConfig audio_text();

  void validate() const;

  /// Applies one `key = value` setting. Keys under `adapter.` apply to both
  /// adapters; `adapter_x.` / `adapter_y.` target one side.
  void set(const std::string& key, const std::string& value);

  /// Canonical key/value text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig parse(const std::string& text, TrainConfig base);

  std::uint64_t hash() const { return fnv1a64(to_text()); }

  bool operator==(const TrainConfig&) const = default;
};

/// Reads a key/value document: `key = value` lines, `[section]` headers
/// prefixing later keys, `#` comments, quoted strings, booleans, numbers and
/// `[a, b]` lists (kept as raw text).
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace fusemix
