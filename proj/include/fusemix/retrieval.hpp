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

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "fusemix/adapter.hpp"
#include "fusemix/latent_store.hpp"

namespace fusemix {

/// positives[q] lists the candidate rows that count as correct for query q.
using Positives = std::vector<std::vector<std::size_t>>;

/// Held-out pairs plus the positive sets in both directions.
struct EvalSet {
  MatrixF x;
  MatrixF y;
  Positives x_to_y;
  Positives y_to_x;

  /// Row i of x and row j of y are positives when groups[i] == groups[j];
  /// without groups, row i pairs only with row i.
  static EvalSet from_store(const StoreHandle& store);
  static EvalSet from_groups(MatrixF x, MatrixF y, const std::vector<std::uint64_t>& groups);
};

struct RecallReport {
  std::string direction;  // "x->y" or "y->x"
  std::vector<std::size_t> ks;
  std::vector<double> recalls;
  std::size_t n_queries = 0;
  std::string checkpoint_id;

  double at(std::size_t k) const;
  std::string to_json() const;
};

/// Eval-mode adapter forward plus L2 normalization, in tiles of `tile_rows`.
MatrixF embed_all(const AdapterParams<float>& params, const MatrixF& latents,
                  std::size_t tile_rows = 4096);

/// Recall@K by cosine similarity. A query scores at K when any of its
/// positives ranks in the top K; equal similarities rank the lower candidate
/// index first.
RecallReport recall_at_k(const MatrixF& queries, const MatrixF& candidates,
                         const Positives& positives, const std::vector<std::size_t>& ks);

/// Both directions: x queries against y candidates, then y against x.
std::array<RecallReport, 2> evaluate(const AdapterParams<float>& params_x,
                                     const AdapterParams<float>& params_y, const EvalSet& set,
                                     const std::vector<std::size_t>& ks);

/// Loads a checkpoint and a store, then evaluates both directions.
std::array<RecallReport, 2> eval_manifest(const fs::path& checkpoint, const fs::path& manifest,
                                          const std::vector<std::size_t>& ks);

std::string reports_to_json(const std::array<RecallReport, 2>& reports);

}  // namespace fusemix
