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
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fusemix/numerics.hpp"

namespace fusemix {

/// Shape and regularization of one fusion adapter.
struct AdapterConfig {
  std::size_t input_dim = 0;
  std::size_t shared_dim = 512;
  std::size_t depth = 4;
  double expansion_factor = 4.0;
  double dropout_p = 0.6;
  bool identity = false;

  /// Width of the expanded hidden layer, truncated like int(e * D).
  std::size_t hidden_dim() const {
    return static_cast<std::size_t>(expansion_factor * static_cast<double>(input_dim));
  }

  void validate() const {
    require(input_dim >= 1, "adapter: input_dim must be positive");
    require(shared_dim >= 1, "adapter: shared_dim must be positive");
    require(expansion_factor > 0.0, "adapter: expansion_factor must be positive");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "adapter: dropout must be in [0, 1)");
    require(identity || hidden_dim() >= 1, "adapter: expansion_factor * input_dim rounds to zero");
    require(!identity || input_dim == shared_dim,
            "adapter: identity adapter requires input_dim == shared_dim");
  }

  bool operator==(const AdapterConfig&) const = default;
};

/// Closed-form parameter count.
inline std::size_t parameter_count(const AdapterConfig& c) {
  if (c.identity) return 0;
  const std::size_t d = c.input_dim, h = c.hidden_dim(), s = c.shared_dim;
  return c.depth * (2 * d + d * h + h + h * d + d) + 2 * d + d * s + s;
}

enum class ParamKind { kWeight, kBias, kNorm };

template <class T>
struct LinearParams {
  Matrix<T> weight;  // in x out
  Matrix<T> bias;    // 1 x out
};

template <class T>
struct NormParams {
  Matrix<T> gamma;  // 1 x d
  Matrix<T> beta;   // 1 x d
};

template <class T>
struct BlockParams {
  NormParams<T> ln;
  LinearParams<T> up;
  LinearParams<T> down;
};

/// Weights of one adapter: `depth` residual blocks, then LayerNorm and the
/// projection into the shared space.
template <class T>
struct AdapterParams {
  AdapterConfig config;
  std::vector<BlockParams<T>> blocks;
  NormParams<T> final_ln;
  LinearParams<T> proj;
  /// Bumped on every in-place update so stale forward caches can be detected.
  std::uint64_t version = 0;
};

/// Visits every tensor in declaration order as f(name, matrix, kind).
template <class P, class F>
void visit_params(P& p, F&& f) {
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string pre = "block" + std::to_string(b) + ".";
    f(pre + "ln.gamma", blk.ln.gamma, ParamKind::kNorm);
    f(pre + "ln.beta", blk.ln.beta, ParamKind::kNorm);
    f(pre + "up.weight", blk.up.weight, ParamKind::kWeight);
    f(pre + "up.bias", blk.up.bias, ParamKind::kBias);
    f(pre + "down.weight", blk.down.weight, ParamKind::kWeight);
    f(pre + "down.bias", blk.down.bias, ParamKind::kBias);
  }
  if (p.config.identity) return;
  f(std::string("final_ln.gamma"), p.final_ln.gamma, ParamKind::kNorm);
  f(std::string("final_ln.beta"), p.final_ln.beta, ParamKind::kNorm);
  f(std::string("proj.weight"), p.proj.weight, ParamKind::kWeight);
  f(std::string("proj.bias"), p.proj.bias, ParamKind::kBias);
}

/// Number of allocated scalars, counted by enumeration.
template <class T>
std::size_t allocated_count(const AdapterParams<T>& p) {
  std::size_t n = 0;
  visit_params(p, [&](const std::string&, const Matrix<T>& m, ParamKind) { n += m.size(); });
  return n;
}

/// Parameters of the right shapes, all zero (gamma included).
template <class T>
AdapterParams<T> zeros_like(const AdapterConfig& config) {
  AdapterParams<T> p;
  p.config = config;
  if (config.identity) return p;
  const std::size_t d = config.input_dim, h = config.hidden_dim(), s = config.shared_dim;
  p.blocks.resize(config.depth);
  for (auto& blk : p.blocks) {
    blk.ln = {Matrix<T>(1, d), Matrix<T>(1, d)};
    blk.up = {Matrix<T>(d, h), Matrix<T>(1, h)};
    blk.down = {Matrix<T>(h, d), Matrix<T>(1, d)};
  }
  p.final_ln = {Matrix<T>(1, d), Matrix<T>(1, d)};
  p.proj = {Matrix<T>(d, s), Matrix<T>(1, s)};
  return p;
}

/// Linear weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases,
/// LayerNorm gamma = 1 and beta = 0.
template <class T>
AdapterParams<T> init_adapter(const AdapterConfig& config, std::uint64_t seed) {
  config.validate();
  AdapterParams<T> p = zeros_like<T>(config);
  Rng rng(derive_seed(seed, Stream::kInit));
  visit_params(p, [&](const std::string& name, Matrix<T>& m, ParamKind kind) {
    if (kind == ParamKind::kWeight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
      for (auto& v : m.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    } else if (kind == ParamKind::kNorm && name.ends_with("gamma")) {
      m.fill(T{1});
    }
  });
  return p;
}

template <class U, class T>
AdapterParams<U> cast_params(const AdapterParams<T>& p) {
  AdapterParams<U> out = zeros_like<U>(p.config);
  std::vector<const Matrix<T>*> src;
  visit_params(p, [&](const std::string&, const Matrix<T>& m, ParamKind) { src.push_back(&m); });
  std::size_t i = 0;
  visit_params(out, [&](const std::string&, Matrix<U>& m, ParamKind) { m = src[i++]->template cast<U>(); });
  out.version = p.version;
  return out;
}

/// Flat copy in declaration order (checkpoint layout).
template <class T>
std::vector<T> flatten(const AdapterParams<T>& p) {
  std::vector<T> flat;
  flat.reserve(allocated_count(p));
  visit_params(p, [&](const std::string&, const Matrix<T>& m, ParamKind) {
    flat.insert(flat.end(), m.values().begin(), m.values().end());
  });
  return flat;
}

template <class T>
AdapterParams<T> unflatten(const AdapterConfig& config, std::span<const T> flat) {
  AdapterParams<T> p = zeros_like<T>(config);
  require(flat.size() == allocated_count(p), "adapter: flat parameter buffer has wrong length");
  std::size_t off = 0;
  visit_params(p, [&](const std::string&, Matrix<T>& m, ParamKind) {
    std::copy_n(flat.begin() + off, m.size(), m.values().begin());
    off += m.size();
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward.

template <class T>
struct BlockCache {
  LayerNormCache<T> ln;
  Matrix<T> ln_out;
  Matrix<T> pre_act;
  Matrix<T> mask;
  Matrix<T> dropped;
};

/// Activations saved by a forward pass for the matching backward pass.
template <class T>
struct AdapterCache {
  const AdapterParams<T>* owner = nullptr;
  std::uint64_t version = 0;
  std::size_t rows = 0;
  std::vector<BlockCache<T>> blocks;
  LayerNormCache<T> final_ln;
  Matrix<T> final_ln_out;
};

template <class T>
Matrix<T> adapter_forward(const AdapterParams<T>& p, const Matrix<T>& z, Mode mode,
                          std::uint64_t seed, AdapterCache<T>* cache = nullptr) {
  const AdapterConfig& c = p.config;
  require(z.cols() == c.input_dim, "adapter forward: expected " + std::to_string(c.input_dim) +
                                       " input columns, got " + std::to_string(z.cols()));
  if (cache) {
    *cache = AdapterCache<T>{};
    cache->owner = &p;
    cache->version = p.version;
    cache->rows = z.rows();
  }
  if (c.identity) return z;

  Matrix<T> x = z;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    BlockCache<T> bc;
    Matrix<T> h = layer_norm(x, blk.ln.gamma, blk.ln.beta, kLayerNormEps, &bc.ln);
    Matrix<T> pre = linear(h, blk.up.weight, blk.up.bias);
    auto drop = dropout(gelu(pre), c.dropout_p, mode, derive_seed(seed, b, 0));
    add_inplace(x, linear(drop.out, blk.down.weight, blk.down.bias));
    if (cache) {
      bc.ln_out = std::move(h);
      bc.pre_act = std::move(pre);
      bc.mask = std::move(drop.mask);
      bc.dropped = std::move(drop.out);
      cache->blocks.push_back(std::move(bc));
    }
  }
  LayerNormCache<T> fc;
  Matrix<T> h = layer_norm(x, p.final_ln.gamma, p.final_ln.beta, kLayerNormEps, cache ? &fc : nullptr);
  Matrix<T> out = linear(h, p.proj.weight, p.proj.bias);
  if (cache) {
    cache->final_ln = std::move(fc);
    cache->final_ln_out = std::move(h);
  }
  return out;
}

template <class T>
struct AdapterGrads {
  Matrix<T> dz;
  AdapterParams<T> dparams;
};

template <class T>
AdapterGrads<T> adapter_backward(const AdapterParams<T>& p, const AdapterCache<T>& cache,
                                 const Matrix<T>& ds) {
  require(cache.owner == &p && cache.version == p.version,
          "adapter backward: stale cache (parameters changed since forward)");
  const AdapterConfig& c = p.config;
  const std::size_t out_cols = c.identity ? c.input_dim : c.shared_dim;
  require(ds.rows() == cache.rows && ds.cols() == out_cols,
          "adapter backward: gradient shape does not match cache");
  AdapterGrads<T> g{Matrix<T>(), zeros_like<T>(c)};
  if (c.identity) {
    g.dz = ds;
    return g;
  }
  require(cache.blocks.size() == p.blocks.size(), "adapter backward: cache depth mismatch");

  // Final projection and LayerNorm.
  g.dparams.proj.weight = matmul_tn(cache.final_ln_out, ds);
  g.dparams.proj.bias = column_sums(ds);
  auto fln = layer_norm_backward(matmul_nt(ds, p.proj.weight), p.final_ln.gamma, cache.final_ln);
  g.dparams.final_ln = {std::move(fln.dgamma), std::move(fln.dbeta)};
  Matrix<T> dx = std::move(fln.dx);

  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    const auto& blk = p.blocks[b];
    const auto& bc = cache.blocks[b];
    auto& gb = g.dparams.blocks[b];
    gb.down.weight = matmul_tn(bc.dropped, dx);
    gb.down.bias = column_sums(dx);
    Matrix<T> dpre = gelu_backward(bc.pre_act, dropout_backward(matmul_nt(dx, blk.down.weight), bc.mask));
    gb.up.weight = matmul_tn(bc.ln_out, dpre);
    gb.up.bias = column_sums(dpre);
    auto ln = layer_norm_backward(matmul_nt(dpre, blk.up.weight), blk.ln.gamma, bc.ln);
    gb.ln = {std::move(ln.dgamma), std::move(ln.dbeta)};
    add_inplace(dx, ln.dx);  // residual path carries dx through unchanged
  }
  g.dz = std::move(dx);
  return g;
}

}  // namespace fusemix
