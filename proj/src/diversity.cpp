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

#include "fusemix/diversity.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "fusemix/numerics.hpp"

namespace fusemix {

KernelKind parse_kernel(const std::string& s) {
  if (s == "linear" || s == "linear_cosine") return KernelKind::kLinearCosine;
  if (s == "poly2") return KernelKind::kPoly2;
  throw Error("unknown kernel '" + s + "' (expected linear or poly2)");
}

std::string to_string(KernelKind k) { return k == KernelKind::kPoly2 ? "poly2" : "linear"; }

MatrixD build_kernel(const MatrixF& latents, KernelKind kind, std::size_t max_rows) {
  const std::size_t n = latents.rows();
  require(n >= 1, "build_kernel: no rows");
  require(n <= max_rows, "build_kernel: " + std::to_string(n) + " rows exceed the memory cap of " +
                             std::to_string(max_rows) + "; subsample first");
  const MatrixD z = l2_normalize(latents.cast<double>());
  MatrixD l = matmul_nt(z, z);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double v = 0.5 * (l(i, j) + l(j, i));
      if (kind == KernelKind::kPoly2) v = (v + 1.0) * (v + 1.0);
      l(i, j) = l(j, i) = v;
    }
  return l;
}

double SubsetResult::log_det() const { return std::accumulate(gains.begin(), gains.end(), 0.0); }

SubsetResult greedy_kdpp(const MatrixD& kernel, std::size_t k) {
  const std::size_t n = kernel.rows();
  require(n >= 1 && kernel.cols() == n, "greedy_kdpp: kernel must be a non-empty square matrix");
  require(k >= 1, "greedy_kdpp: k must be at least 1");
  k = std::min(k, n);

  SubsetResult out;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = kernel(i, i);
  std::vector<bool> taken(n, false);
  // Row t holds the t-th Cholesky column restricted to every candidate.
  std::vector<std::vector<double>> chol;
  chol.reserve(k);

  while (out.indices.size() < k) {
    std::size_t best = n;
    double best_d2 = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i] && d2[i] > best_d2) {
        best_d2 = d2[i];
        best = i;
      }
    if (best == n || !(best_d2 > kMinPivot)) break;

    const std::size_t j = best;
    const double dj = std::sqrt(best_d2);
    out.indices.push_back(j);
    out.gains.push_back(std::log(best_d2));
    taken[j] = true;

    std::vector<double> e(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double dot = 0.0;
      for (const auto& c : chol) dot += c[j] * c[i];
      e[i] = (kernel(j, i) - dot) / dj;
      d2[i] -= e[i] * e[i];
    }
    e[j] = dj;
    chol.push_back(std::move(e));
  }
  return out;
}

std::vector<std::size_t> uniform_subset(std::size_t n, std::size_t k, std::uint64_t seed) {
  require(k <= n, "uniform_subset: k=" + std::to_string(k) + " exceeds N=" + std::to_string(n));
  auto p = permutation(n, seed);
  p.resize(k);
  return p;
}

PairManifest subset_store(const StoreHandle& store, const std::vector<std::size_t>& indices,
                          const fs::path& out_dir) {
  require(!indices.empty(), "subset: no indices selected");
  for (std::size_t i : indices)
    require(i < store.count(), "subset: index " + std::to_string(i) + " out of range for store of " +
                                   std::to_string(store.count()));
  const Batch rows = store.gather(indices);
  std::vector<std::uint64_t> groups;
  if (!store.manifest().groups.empty())
    for (std::size_t i : indices) groups.push_back(store.manifest().groups[i]);
  return write_store(rows.z_x, rows.z_y, store.tags(), out_dir, groups);
}

}  // namespace fusemix
