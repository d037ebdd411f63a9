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
#include <functional>
#include <optional>
#include <string>

#include "fusemix/checkpoint.hpp"
#include "fusemix/config.hpp"
#include "fusemix/latent_store.hpp"
#include "fusemix/retrieval.hpp"

namespace fusemix {

/// One line of the metrics log.
struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t step = 0;  // 0-based global step
  double loss = 0.0;
  double loss_xy = 0.0;
  double loss_yx = 0.0;
  double logit_scale = 0.0;
  double lr = 0.0;
  double lambda = 0.0;  // NaN when the scheme does not mix

  std::string to_json() const;
};

struct TrainOptions {
  /// Receives metrics.ndjson, config.toml, periodic epoch checkpoints and
  /// `last`. Empty means nothing is written.
  std::filesystem::path out_dir;
  /// Held-out pairs for in-training evaluation; falls back to
  /// config.eval_manifest when null.
  const EvalSet* eval_set = nullptr;
  std::function<void(const StepRecord&)> on_step;
  /// Stop after this many completed epochs (the schedule still spans
  /// config.epochs, so the run can be resumed).
  std::optional<std::size_t> stop_after_epoch;
};

inline constexpr const char* kLastCheckpoint = "last";
inline constexpr const char* kMetricsFile = "metrics.ndjson";
inline constexpr const char* kConfigEcho = "config.toml";

/// Number of optimizer steps in one epoch over `count` pairs.
std::size_t steps_per_epoch(std::size_t count, std::size_t batch_b);

/// Optimizer config with total/warmup steps resolved for a dataset size.
OptimConfig resolved_optim(const TrainConfig& config, std::size_t count);

/// Freshly initialized state for `config`; adapter input dims left at zero
/// are taken from the store.
Checkpoint init_checkpoint(TrainConfig config, const StoreHandle& store);

/// Runs the mixing/contrastive training loop from scratch.
Checkpoint train(const StoreHandle& store, const TrainConfig& config, const TrainOptions& options = {});

/// Continues a run from a checkpoint; bit-identical to an uninterrupted run.
Checkpoint resume(Checkpoint checkpoint, const StoreHandle& store, const TrainOptions& options = {});

}  // namespace fusemix
