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

#include <cstdint>
#include <string>

#include "fusemix/matrix.hpp"

namespace fusemix {

enum class MixScheme { kFuseMix, kGaussian, kRandomQuantize, kNone };

std::string to_string(MixScheme s);
MixScheme parse_mix_scheme(const std::string& s);

struct MixConfig {
  MixScheme scheme = MixScheme::kFuseMix;
  double alpha = 1.0;
  double sigma = 0.01;
  int bins_lo = 2;
  int bins_hi = 32;

  void validate() const;
  bool operator==(const MixConfig&) const = default;
};

/// B augmented positive pairs. `lambda` is the single coefficient applied to
/// both modalities (NaN for schemes that do not mix).
struct MixedBatch {
  MatrixF z_x;
  MatrixF z_y;
  double lambda_x = 0.0;
  double lambda_y = 0.0;
};

inline constexpr double kLambdaClamp = 1e-6;

/// Beta(alpha, alpha) as g1 / (g1 + g2) of two Gamma(alpha) draws, clamped to
/// (1e-6, 1 - 1e-6).
double sample_beta(double alpha, std::uint64_t seed);

/// Splits each modality of a 2B-row batch into halves and forms
/// lambda * first + (1 - lambda) * second with the same lambda for both.
MixedBatch fuse_mix(const MatrixF& z_x, const MatrixF& z_y, double lambda);

/// Adds N(0, sigma^2) noise elementwise.
MatrixF gaussian_noise(const MatrixF& rows, double sigma, std::uint64_t seed);

/// Draws a bin count k in [lo, hi], then snaps every value to the midpoint of
/// one of k uniform bins spanning its column's batch range.
MatrixF random_quantize(const MatrixF& rows, int bins_lo, int bins_hi, std::uint64_t seed);

/// Applies the configured scheme to a 2B-row batch and returns B rows.
/// Non-mixing schemes keep the first B rows.
MixedBatch augment_batch(const MatrixF& z_x, const MatrixF& z_y, const MixConfig& config,
                         std::uint64_t seed);

}  // namespace fusemix
