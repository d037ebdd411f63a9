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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fusemix/error.hpp"

namespace fusemix {

/// AdamW with linear warmup from `warmup_start_lr` to `lr`, then cosine decay
/// to `final_lr` at `total_steps`.
struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_start_lr = 1e-6;
  double final_lr = 0.0;
  std::uint64_t total_steps = 1;
  std::uint64_t warmup_steps = 0;

  void validate() const;
  bool operator==(const OptimConfig&) const = default;
};

double lr_at(std::uint64_t step, const OptimConfig& config);

struct MomentBuffer {
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimState {
  std::vector<MomentBuffer> slots;
  std::uint64_t step = 0;
};

/// One parameter tensor as seen by the optimizer. `decay` is false for
/// LayerNorm parameters and the temperature.
template <class T>
struct ParamSlot {
  std::span<T> value;
  std::span<const T> grad;
  bool decay = true;
};

/// Single AdamW update of one tensor at (1-based) step t.
template <class T>
void adamw_update(std::span<T> value, std::span<const T> grad, MomentBuffer& mb, std::uint64_t t,
                  double lr_now, bool decay, const OptimConfig& c) {
  require(value.size() == grad.size(), "optimizer: gradient shape does not match parameter");
  if (mb.m.empty() && mb.v.empty()) {
    mb.m.assign(value.size(), 0.0);
    mb.v.assign(value.size(), 0.0);
  }
  require(mb.m.size() == value.size() && mb.v.size() == value.size(),
          "optimizer: moment shape does not match parameter");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const double wd = decay ? c.weight_decay : 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    require(std::isfinite(g), "optimizer: non-finite gradient");
    mb.m[i] = c.beta1 * mb.m[i] + (1.0 - c.beta1) * g;
    mb.v[i] = c.beta2 * mb.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = mb.m[i] / bc1;
    const double v_hat = mb.v[i] / bc2;
    const double theta = value[i];
    value[i] = static_cast<T>(theta - lr_now * (m_hat / (std::sqrt(v_hat) + c.eps) + wd * theta));
  }
}

/// Advances the step counter and updates every slot. The slot list must keep
/// the same order and shapes from call to call.
template <class T>
void apply_step(std::span<const ParamSlot<T>> slots, OptimState& state, double lr_now,
                const OptimConfig& config) {
  if (state.slots.empty()) state.slots.resize(slots.size());
  require(state.slots.size() == slots.size(), "optimizer: parameter list changed between steps");
  ++state.step;
  for (std::size_t i = 0; i < slots.size(); ++i)
    adamw_update(slots[i].value, slots[i].grad, state.slots[i], state.step, lr_now, slots[i].decay,
                 config);
}

}  // namespace fusemix
