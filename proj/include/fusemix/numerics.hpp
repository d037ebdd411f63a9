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
#include <numbers>
#include <span>
#include <vector>

#include "fusemix/matrix.hpp"
#include "fusemix/random.hpp"

namespace fusemix {

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// Matrix products. All three variants accumulate in double.

/// C = A * B.
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.rows(),
          "matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix<T> c(m, n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const T* br = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(br[j]);
    }
    T* cr = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) cr[j] = static_cast<T>(acc[j]);
  }
  return c;
}

/// C = A * B^T.
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.cols(),
          "matmul_nt: shape mismatch " + shape_str(a) + " * " + shape_str(b) + "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix<T> c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const T* ar = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* br = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(ar[p]) * br[p];
      c(i, j) = static_cast<T>(s);
    }
  }
  return c;
}

/// C = A^T * B.
template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.rows() == b.rows(),
          "matmul_tn: shape mismatch " + shape_str(a) + "^T * " + shape_str(b));
  const std::size_t m = a.cols(), r = a.rows(), n = b.cols();
  std::vector<double> acc(m * n, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const T* ar = a.data() + i * m;
    const T* br = b.data() + i * n;
    for (std::size_t p = 0; p < m; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* out = acc.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * static_cast<double>(br[j]);
    }
  }
  Matrix<T> c(m, n);
  for (std::size_t i = 0; i < acc.size(); ++i) c[i] = static_cast<T>(acc[i]);
  return c;
}

template <class T>
struct MatmulGrads {
  Matrix<T> da;
  Matrix<T> db;
};

/// Gradients of C = A * B given dC: dA = dC * B^T, dB = A^T * dC.
template <class T>
MatmulGrads<T> matmul_backward(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& dc) {
  require(dc.rows() == a.rows() && dc.cols() == b.cols(), "matmul_backward: shape mismatch");
  return {matmul_nt(dc, b), matmul_tn(a, dc)};
}

/// Column sums of m as a 1 x cols row.
template <class T>
Matrix<T> column_sums(const Matrix<T>& m) {
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) acc[j] += m(i, j);
  Matrix<T> out(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out[j] = static_cast<T>(acc[j]);
  return out;
}

/// y = x * w + b with w stored (in x out) and b a 1 x out row.
template <class T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape mismatch");
  Matrix<T> y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b[j];
  return y;
}

template <class T>
void add_inplace(Matrix<T>& dst, const Matrix<T>& src) {
  require(dst.same_shape(src), "add: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// GELU, exact form x * Phi(x).

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

inline double gelu(double x) { return x * normal_cdf(x); }
inline double gelu_grad(double x) { return normal_cdf(x) + x * normal_pdf(x); }

template <class T>
Matrix<T> gelu(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(gelu(static_cast<double>(x[i])));
  return y;
}

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  require(x.same_shape(dy), "gelu_backward: shape mismatch");
  Matrix<T> dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    dx[i] = static_cast<T>(dy[i] * gelu_grad(static_cast<double>(x[i])));
  return dx;
}

// ---------------------------------------------------------------------------
// LayerNorm over the last dimension.

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
struct LayerNormCache {
  Matrix<T> xhat;            // normalized input before the affine map
  std::vector<double> rstd;  // 1 / sqrt(var + eps) per row
};

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta,
                     double eps = kLayerNormEps, LayerNormCache<T>* cache = nullptr) {
  const std::size_t d = x.cols();
  require(d >= 1, "layer_norm: empty feature dimension");
  require(eps > 0.0, "layer_norm: eps must be positive");
  require(gamma.size() == d && beta.size() == d, "layer_norm: affine shape mismatch");
  Matrix<T> y(x.rows(), d);
  if (cache) {
    cache->xhat = Matrix<T>(x.rows(), d);
    cache->rstd.assign(x.rows(), 0.0);
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (T v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (r[j] - mean) * rstd;
      y(i, j) = static_cast<T>(xh * gamma[j] + beta[j]);
      if (cache) cache->xhat(i, j) = static_cast<T>(xh);
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return y;
}

template <class T>
struct LayerNormGrads {
  Matrix<T> dx;
  Matrix<T> dgamma;
  Matrix<T> dbeta;
};

template <class T>
LayerNormGrads<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gamma,
                                      const LayerNormCache<T>& cache) {
  const std::size_t n = dy.rows(), d = dy.cols();
  require(cache.xhat.same_shape(dy) && cache.rstd.size() == n && gamma.size() == d,
          "layer_norm_backward: cache does not match gradient shape");
  LayerNormGrads<T> g{Matrix<T>(n, d), Matrix<T>(1, d), Matrix<T>(1, d)};
  std::vector<double> dgamma(d, 0.0), dbeta(d, 0.0), dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = cache.xhat(i, j);
      dgamma[j] += dy(i, j) * xh;
      dbeta[j] += dy(i, j);
      dxhat[j] = static_cast<double>(dy(i, j)) * gamma[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xh;
    }
    const double scale = cache.rstd[i] / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      g.dx(i, j) = static_cast<T>(
          scale * (static_cast<double>(d) * dxhat[j] - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat));
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    g.dgamma[j] = static_cast<T>(dgamma[j]);
    g.dbeta[j] = static_cast<T>(dbeta[j]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout.

template <class T>
struct DropoutResult {
  Matrix<T> out;
  Matrix<T> mask;  // 0 or 1/(1-p) per element; empty when the op is the identity
};

template <class T>
DropoutResult<T> dropout(const Matrix<T>& x, double p, Mode mode, std::uint64_t seed) {
  require(p >= 0.0 && p < 1.0, "dropout: probability must be in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) return {x, Matrix<T>()};
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  DropoutResult<T> r{Matrix<T>(x.rows(), x.cols()), Matrix<T>(x.rows(), x.cols())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.uniform() < p ? T{0} : keep_scale;
    r.mask[i] = m;
    r.out[i] = x[i] * m;
  }
  return r;
}

template <class T>
Matrix<T> dropout_backward(const Matrix<T>& dy, const Matrix<T>& mask) {
  if (mask.empty()) return dy;
  require(mask.same_shape(dy), "dropout_backward: mask shape mismatch");
  Matrix<T> dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Row-wise L2 normalization.

inline constexpr double kMinRowNorm = 1e-12;

template <class T>
Matrix<T> l2_normalize(const Matrix<T>& x, std::vector<double>* norms = nullptr) {
  Matrix<T> y(x.rows(), x.cols());
  if (norms) norms->assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double s = 0.0;
    for (T v : r) s += static_cast<double>(v) * v;
    const double n = std::sqrt(s);
    require(n > kMinRowNorm, "l2_normalize: near-zero row norm at row " + std::to_string(i));
    for (std::size_t j = 0; j < r.size(); ++j) y(i, j) = static_cast<T>(r[j] / n);
    if (norms) (*norms)[i] = n;
  }
  return y;
}

/// dx = (I - y y^T) dy / ||x|| per row, where y is the normalized output.
template <class T>
Matrix<T> l2_normalize_backward(const Matrix<T>& dy, const Matrix<T>& y,
                                const std::vector<double>& norms) {
  require(dy.same_shape(y) && norms.size() == y.rows(), "l2_normalize_backward: shape mismatch");
  Matrix<T> dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += static_cast<double>(y(i, j)) * dy(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j)
      dx(i, j) = static_cast<T>((dy(i, j) - y(i, j) * dot) / norms[i]);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over rows.

template <class T>
struct CrossEntropyResult {
  double loss = 0.0;
  Matrix<T> dlogits;  // (softmax - onehot) / rows
};

template <class T>
CrossEntropyResult<T> softmax_cross_entropy(const Matrix<T>& logits,
                                            std::span<const std::size_t> targets) {
  const std::size_t n = logits.rows(), c = logits.cols();
  require(targets.size() == n, "softmax_cross_entropy: one target per row required");
  require(n >= 1 && c >= 1, "softmax_cross_entropy: empty logits");
  CrossEntropyResult<T> r{0.0, Matrix<T>(n, c)};
  std::vector<double> e(c);
  for (std::size_t i = 0; i < n; ++i) {
    require(targets[i] < c, "softmax_cross_entropy: target index out of range");
    const auto row = logits.row(i);
    double mx = row[0];
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      e[j] = std::exp(static_cast<double>(row[j]) - mx);
      z += e[j];
    }
    r.loss += std::log(z) - (static_cast<double>(row[targets[i]]) - mx);
    for (std::size_t j = 0; j < c; ++j) {
      const double grad = e[j] / z - (j == targets[i] ? 1.0 : 0.0);
      r.dlogits(i, j) = static_cast<T>(grad / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace fusemix
