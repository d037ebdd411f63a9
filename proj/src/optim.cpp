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

#include "fusemix/optim.hpp"

#include <numbers>
#include <string>

namespace fusemix {

void OptimConfig::validate() const {
  require(lr > 0.0, "optim.lr must be positive");
  require(weight_decay >= 0.0, "optim.weight_decay must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "optim.betas must lie in [0, 1)");
  require(eps > 0.0, "optim.eps must be positive");
  require(warmup_steps <= total_steps, "optim: warmup_steps exceeds total_steps");
}

double lr_at(std::uint64_t step, const OptimConfig& c) {
  require(step <= c.total_steps, "lr_at: step " + std::to_string(step) + " beyond total_steps " +
                                     std::to_string(c.total_steps));
  if (step < c.warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(c.warmup_steps);
    return c.warmup_start_lr + (c.lr - c.warmup_start_lr) * frac;
  }
  if (c.total_steps == c.warmup_steps) return c.lr;
  const double progress = static_cast<double>(step - c.warmup_steps) /
                          static_cast<double>(c.total_steps - c.warmup_steps);
  return c.final_lr + 0.5 * (c.lr - c.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace fusemix
