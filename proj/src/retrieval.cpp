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

#include "fusemix/retrieval.hpp"

#include <algorithm>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "fusemix/checkpoint.hpp"

namespace fusemix {

namespace {

constexpr std::size_t kQueryTile = 512;

MatrixF normalized_rows(const MatrixF& m) { return l2_normalize(m); }

}  // namespace

EvalSet EvalSet::from_groups(MatrixF x, MatrixF y, const std::vector<std::uint64_t>& groups) {
  require(x.rows() == y.rows(), "eval set: row counts differ");
  const std::size_t n = x.rows();
  EvalSet s{std::move(x), std::move(y), Positives(n), Positives(n)};
  if (groups.empty()) {
    for (std::size_t i = 0; i < n; ++i) s.x_to_y[i] = s.y_to_x[i] = {i};
    return s;
  }
  require(groups.size() == n, "eval set: groups length does not match count");
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[groups[i]].push_back(i);
  for (std::size_t i = 0; i < n; ++i) s.x_to_y[i] = s.y_to_x[i] = members[groups[i]];
  return s;
}

EvalSet EvalSet::from_store(const StoreHandle& store) {
  return from_groups(store.x(), store.y(), store.manifest().groups);
}

double RecallReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return recalls[i];
  throw Error("recall report has no entry for K=" + std::to_string(k));
}

std::string RecallReport::to_json() const {
  nlohmann::json j = {{"direction", direction},
                      {"ks", ks},
                      {"recalls", recalls},
                      {"n_queries", n_queries},
                      {"checkpoint_id", checkpoint_id}};
  return j.dump();
}

std::string reports_to_json(const std::array<RecallReport, 2>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(nlohmann::json::parse(r.to_json()));
  return arr.dump(2);
}

MatrixF embed_all(const AdapterParams<float>& params, const MatrixF& latents, std::size_t tile_rows) {
  require(latents.cols() == params.config.input_dim,
          "embed: latent dim " + std::to_string(latents.cols()) + " does not match adapter input " +
              std::to_string(params.config.input_dim));
  require(tile_rows >= 1, "embed: tile size must be positive");
  const std::size_t out_dim = params.config.identity ? params.config.input_dim : params.config.shared_dim;
  MatrixF out(latents.rows(), out_dim);
  for (std::size_t begin = 0; begin < latents.rows(); begin += tile_rows) {
    const std::size_t end = std::min(latents.rows(), begin + tile_rows);
    const MatrixF emb = l2_normalize(adapter_forward(params, latents.slice_rows(begin, end), Mode::kEval, 0));
    std::copy(emb.values().begin(), emb.values().end(), out.values().begin() + begin * out_dim);
  }
  return out;
}

RecallReport recall_at_k(const MatrixF& queries, const MatrixF& candidates,
                         const Positives& positives, const std::vector<std::size_t>& ks) {
  require(queries.cols() == candidates.cols(), "recall: query and candidate dims differ");
  require(positives.size() == queries.rows(), "recall: positives must cover every query");
  require(!ks.empty() && std::is_sorted(ks.begin(), ks.end()) && ks.front() >= 1,
          "recall: ks must be non-empty, positive and ascending");
  const MatrixF q = normalized_rows(queries);
  const MatrixF c = normalized_rows(candidates);

  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t begin = 0; begin < q.rows(); begin += kQueryTile) {
    const std::size_t end = std::min(q.rows(), begin + kQueryTile);
    const MatrixF sim = matmul_nt(q.slice_rows(begin, end), c);
    for (std::size_t qi = begin; qi < end; ++qi) {
      const auto& pos = positives[qi];
      require(!pos.empty(), "recall: query " + std::to_string(qi) + " has no positives");
      const auto row = sim.row(qi - begin);
      std::size_t best = c.rows();
      for (std::size_t p : pos) {
        require(p < c.rows(), "recall: positive index out of range");
        const float sp = row[p];
        std::size_t rank = 0;
        for (std::size_t j = 0; j < row.size(); ++j)
          if (row[j] > sp || (row[j] == sp && j < p)) ++rank;
        best = std::min(best, rank);
      }
      for (std::size_t k = 0; k < ks.size(); ++k)
        if (best < ks[k]) ++hits[k];
    }
  }
  RecallReport r;
  r.ks = ks;
  r.n_queries = q.rows();
  for (std::size_t h : hits) r.recalls.push_back(static_cast<double>(h) / static_cast<double>(q.rows()));
  return r;
}

std::array<RecallReport, 2> evaluate(const AdapterParams<float>& params_x,
                                     const AdapterParams<float>& params_y, const EvalSet& set,
                                     const std::vector<std::size_t>& ks) {
  const MatrixF ex = embed_all(params_x, set.x);
  const MatrixF ey = embed_all(params_y, set.y);
  std::array<RecallReport, 2> out{recall_at_k(ex, ey, set.x_to_y, ks), recall_at_k(ey, ex, set.y_to_x, ks)};
  out[0].direction = "x->y";
  out[1].direction = "y->x";
  return out;
}

std::array<RecallReport, 2> eval_manifest(const fs::path& checkpoint, const fs::path& manifest,
                                          const std::vector<std::size_t>& ks) {
  const Checkpoint ck = Checkpoint::load(checkpoint);
  const StoreHandle store = StoreHandle::open(manifest);
  require(store.dim_x() == ck.params_x.config.input_dim && store.dim_y() == ck.params_y.config.input_dim,
          "eval: store dims do not match checkpoint adapters");
  auto reports = evaluate(ck.params_x, ck.params_y, EvalSet::from_store(store), ks);
  const std::string id = checkpoint_id(checkpoint);
  for (auto& r : reports) r.checkpoint_id = id;
  return reports;
}

}  // namespace fusemix
