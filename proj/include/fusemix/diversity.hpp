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
#include <string>
#include <vector>

#include "fusemix/latent_store.hpp"
#include "fusemix/matrix.hpp"

namespace fusemix {

/// linear_cosine: K(z, z') = z . z' on normalized rows.
/// poly2:         K(z, z') = (z . z' + 1)^2 on normalized rows.
enum class KernelKind { kLinearCosine, kPoly2 };

KernelKind parse_kernel(const std::string& s);
std::string to_string(KernelKind k);

/// Dense kernels are refused above this many rows; subsample uniformly first.
inline constexpr std::size_t kDefaultKernelRowCap = 75000;

MatrixD build_kernel(const MatrixF& latents, KernelKind kind,
                     std::size_t max_rows = kDefaultKernelRowCap);

struct SubsetResult {
  std::vector<std::size_t> indices;  // in selection order
  std::vector<double> gains;         // log-det gain of each pick

  double log_det() const;
};

/// Gains at or below this (log 1e-12) end the selection early.
inline constexpr double kMinPivot = 1e-12;

/// Greedy MAP for a k-DPP: each step adds the item with the largest
/// log det(L_{S+i}) - log det(L_S), tracked with an incremental Cholesky
/// factorization in O(N k) per step. Ties go to the lowest index.
SubsetResult greedy_kdpp(const MatrixD& kernel, std::size_t k);

/// k distinct indices drawn uniformly without replacement.
std::vector<std::size_t> uniform_subset(std::size_t n, std::size_t k, std::uint64_t seed);

/// New store holding the selected pairs in the given order.
PairManifest subset_store(const StoreHandle& store, const std::vector<std::size_t>& indices,
                          const fs::path& out_dir);

}  // namespace fusemix
