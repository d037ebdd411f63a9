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
#include <numeric>
#include <vector>

#include "fusemix/adapter.hpp"
#include "fusemix/numerics.hpp"

namespace fusemix {

/// Learnable temperature, stored as the log of the logit scale. The scale
/// multiplies cosine similarities, so it plays the role of 1/tau.
struct Temperature {
  static constexpr double kDefaultInitScale = 1.0 / 0.07;
  static constexpr double kDefaultMaxScale = 100.0;

  double log_t = std::log(kDefaultInitScale);

  double scale() const { return std::exp(log_t); }
  /// Caps log_t so that exp(log_t) <= max_scale holds after rounding too.
  void clamp(double max_scale = kDefaultMaxScale) {
    if (std::exp(log_t) <= max_scale) return;
    log_t = std::log(max_scale);
    while (std::exp(log_t) > max_scale) log_t = std::nextafter(log_t, -HUGE_VAL);
  }
};

struct LossReport {
  double loss = 0.0;
  double loss_xy = 0.0;
  double loss_yx = 0.0;
  double logit_scale = 0.0;
  std::size_t batch_b = 0;
};

template <class T>
struct InfoNceResult {
  LossReport report;
  Matrix<T> ds_x;
  Matrix<T> ds_y;
  double dlog_t = 0.0;
};

/// Symmetric InfoNCE over in-batch negatives: row i of s_x is the positive of
/// row i of s_y and every other row is a negative.
template <class T>
InfoNceResult<T> symmetric_infonce(const Matrix<T>& s_x, const Matrix<T>& s_y, double log_t) {
  const std::size_t b = s_x.rows();
  require(s_x.same_shape(s_y), "symmetric_infonce: embedding shapes differ");
  require(b >= 2, "symmetric_infonce: batch must have at least 2 rows");
  for (const Matrix<T>* s : {&s_x, &s_y}) {
    for (std::size_t i = 0; i < b; ++i) {
      double n2 = 0.0;
      for (T v : s->row(i)) n2 += static_cast<double>(v) * v;
      require(std::abs(std::sqrt(n2) - 1.0) <= 1e-4, "symmetric_infonce: rows must be unit-norm");
    }
  }
  const double scale = std::exp(log_t);
  const Matrix<T> sim = matmul_nt(s_x, s_y);  // cosine similarities, B x B
  Matrix<T> logits_xy(b, b), logits_yx(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      logits_xy(i, j) = static_cast<T>(sim(i, j) * scale);
      logits_yx(j, i) = logits_xy(i, j);
    }
  std::vector<std::size_t> labels(b);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  const auto ce_xy = softmax_cross_entropy(logits_xy, labels);
  const auto ce_yx = softmax_cross_entropy(logits_yx, labels);

  InfoNceResult<T> r;
  r.report = {(ce_xy.loss + ce_yx.loss) / 2.0, ce_xy.loss, ce_yx.loss, scale, b};
  // dL/dsim(i,j) = scale * (dxy(i,j) + dyx(j,i)) / 2
  Matrix<T> dsim(b, b);
  double dlog_t = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const double g = 0.5 * (static_cast<double>(ce_xy.dlogits(i, j)) + ce_yx.dlogits(j, i));
      dsim(i, j) = static_cast<T>(g * scale);
      dlog_t += g * scale * sim(i, j);
    }
  r.ds_x = matmul(dsim, s_y);
  r.ds_y = matmul_tn(dsim, s_x);
  r.dlog_t = dlog_t;
  return r;
}

template <class T>
struct StepResult {
  LossReport report;
  AdapterGrads<T> grad_x;
  AdapterGrads<T> grad_y;
  double dlog_t = 0.0;
};

/// Adapters, normalization and loss for one (already augmented) batch.
/// Dropout masks for the two sides come from independent streams of `seed`.
template <class T>
StepResult<T> step_loss(const AdapterParams<T>& params_x, const AdapterParams<T>& params_y,
                        double log_t, const Matrix<T>& z_x, const Matrix<T>& z_y, Mode mode,
                        std::uint64_t seed) {
  require(z_x.rows() == z_y.rows(), "step_loss: modalities have different row counts");
  AdapterCache<T> cache_x, cache_y;
  const Matrix<T> pre_x = adapter_forward(params_x, z_x, mode, derive_seed(seed, 0, 1), &cache_x);
  const Matrix<T> pre_y = adapter_forward(params_y, z_y, mode, derive_seed(seed, 1, 1), &cache_y);
  require(pre_x.cols() == pre_y.cols(), "step_loss: adapters map to different shared dims");
  std::vector<double> norm_x, norm_y;
  const Matrix<T> s_x = l2_normalize(pre_x, &norm_x);
  const Matrix<T> s_y = l2_normalize(pre_y, &norm_y);
  auto nce = symmetric_infonce(s_x, s_y, log_t);
  StepResult<T> r;
  r.report = nce.report;
  r.dlog_t = nce.dlog_t;
  r.grad_x = adapter_backward(params_x, cache_x, l2_normalize_backward(nce.ds_x, s_x, norm_x));
  r.grad_y = adapter_backward(params_y, cache_y, l2_normalize_backward(nce.ds_y, s_y, norm_y));
  return r;
}

}  // namespace fusemix
