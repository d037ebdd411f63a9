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

#include "fusemix/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusemix/random.hpp"

namespace fusemix {

std::string to_string(MixScheme s) {
  switch (s) {
    case MixScheme::kFuseMix: return "fusemix";
    case MixScheme::kGaussian: return "gaussian";
    case MixScheme::kRandomQuantize: return "random_quantize";
    case MixScheme::kNone: return "none";
  }
  return "none";
}

MixScheme parse_mix_scheme(const std::string& s) {
  if (s == "fusemix") return MixScheme::kFuseMix;
  if (s == "gaussian") return MixScheme::kGaussian;
  if (s == "random_quantize" || s == "rq") return MixScheme::kRandomQuantize;
  if (s == "none") return MixScheme::kNone;
  throw Error("unknown augment.scheme '" + s + "'");
}

void MixConfig::validate() const {
  require(alpha > 0.0, "augment.alpha must be positive");
  require(sigma >= 0.0, "augment.sigma must be non-negative");
  require(bins_lo >= 2 && bins_lo <= bins_hi, "augment bins must satisfy 2 <= lo <= hi");
}

double sample_beta(double alpha, std::uint64_t seed) {
  require(alpha > 0.0, "sample_beta: alpha must be positive");
  Rng rng(seed);
  const double g1 = rng.gamma(alpha);
  const double g2 = rng.gamma(alpha);
  const double lam = g1 / (g1 + g2);
  return std::clamp(std::isfinite(lam) ? lam : 0.5, kLambdaClamp, 1.0 - kLambdaClamp);
}

namespace {

MatrixF mix_halves(const MatrixF& z, double lambda) {
  const std::size_t b = z.rows() / 2;
  MatrixF out(b, z.cols());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < z.cols(); ++j)
      out(i, j) = static_cast<float>(lambda * z(i, j) + (1.0 - lambda) * z(i + b, j));
  return out;
}

}  // namespace

MixedBatch fuse_mix(const MatrixF& z_x, const MatrixF& z_y, double lambda) {
  require(z_x.rows() == z_y.rows(), "fusemix: modalities have different row counts");
  require(z_x.rows() % 2 == 0 && z_x.rows() > 0, "fusemix: batch row count must be even");
  require(lambda > 0.0 && lambda < 1.0, "fusemix: lambda must lie in (0, 1)");
  return {mix_halves(z_x, lambda), mix_halves(z_y, lambda), lambda, lambda};
}

MatrixF gaussian_noise(const MatrixF& rows, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, "gaussian_noise: sigma must be non-negative");
  if (sigma == 0.0) return rows;
  Rng rng(seed);
  MatrixF out = rows;
  for (auto& v : out.values()) v = static_cast<float>(v + sigma * rng.normal());
  return out;
}

MatrixF random_quantize(const MatrixF& rows, int bins_lo, int bins_hi, std::uint64_t seed) {
  require(bins_lo >= 2 && bins_lo <= bins_hi, "random_quantize: bins must satisfy 2 <= lo <= hi");
  Rng rng(seed);
  const auto k = static_cast<double>(
      bins_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(bins_hi - bins_lo) + 1)));
  MatrixF out = rows;
  for (std::size_t j = 0; j < rows.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      lo = std::min(lo, static_cast<double>(rows(i, j)));
      hi = std::max(hi, static_cast<double>(rows(i, j)));
    }
    if (!(hi > lo)) continue;
    const double width = (hi - lo) / k;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      const double bin = std::min(std::floor((rows(i, j) - lo) / width), k - 1.0);
      out(i, j) = static_cast<float>(lo + (bin + 0.5) * width);
    }
  }
  return out;
}

MixedBatch augment_batch(const MatrixF& z_x, const MatrixF& z_y, const MixConfig& config,
                         std::uint64_t seed) {
  require(z_x.rows() == z_y.rows() && z_x.rows() % 2 == 0 && z_x.rows() > 0,
          "augment: batch must have an even, matching row count");
  const std::size_t b = z_x.rows() / 2;
  constexpr double kNoLambda = std::numeric_limits<double>::quiet_NaN();
  switch (config.scheme) {
    case MixScheme::kFuseMix:
      return fuse_mix(z_x, z_y, sample_beta(config.alpha, seed));
    case MixScheme::kGaussian:
      return {gaussian_noise(z_x.slice_rows(0, b), config.sigma, derive_seed(seed, 0, 2)),
              gaussian_noise(z_y.slice_rows(0, b), config.sigma, derive_seed(seed, 1, 2)),
              kNoLambda, kNoLambda};
    case MixScheme::kRandomQuantize:
      return {random_quantize(z_x.slice_rows(0, b), config.bins_lo, config.bins_hi,
                              derive_seed(seed, 0, 3)),
              random_quantize(z_y.slice_rows(0, b), config.bins_lo, config.bins_hi,
                              derive_seed(seed, 1, 3)),
              kNoLambda, kNoLambda};
    case MixScheme::kNone:
      break;
  }
  return {z_x.slice_rows(0, b), z_y.slice_rows(0, b), kNoLambda, kNoLambda};
}

}  // namespace fusemix
