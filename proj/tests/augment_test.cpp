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

#include <doctest.h>

#include <cmath>

#include "fusemix/augment.hpp"
#include "oracles.hpp"

using namespace fusemix;
using fusemix::testing::ks_uniform;
using fusemix::testing::random_matrix;

TEST_CASE("sample_beta: alpha = 1 is uniform") {
  std::vector<double> draws;
  for (std::uint64_t s = 0; s < 100000; ++s) draws.push_back(sample_beta(1.0, derive_seed(7, Stream::kMix, s)));
  CHECK(ks_uniform(draws) < 0.01);
  for (double d : draws) CHECK((d > 0.0 && d < 1.0));
}

TEST_CASE("sample_beta: concentrated alpha matches Beta moments") {
  const double alpha = 1000.0;
  double sum = 0.0, sum2 = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    const double x = sample_beta(alpha, static_cast<std::uint64_t>(s));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.02);
  // Var of Beta(a, a) = 1 / (4 (2a + 1)).
  CHECK(var == doctest::Approx(1.0 / (4.0 * (2.0 * alpha + 1.0))).epsilon(0.1));
}

TEST_CASE("sample_beta: determinism, small alpha and errors") {
  CHECK(sample_beta(1.0, 5) == sample_beta(1.0, 5));
  CHECK(sample_beta(0.2, 5) == sample_beta(0.2, 5));
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const double x = sample_beta(0.05, s);
    CHECK((x >= kLambdaClamp && x <= 1.0 - kLambdaClamp));
  }
  CHECK_THROWS_AS(sample_beta(0.0, 1), Error);
  CHECK_THROWS_AS(sample_beta(-1.0, 1), Error);
}

TEST_CASE("fusemix: endpoints, hand case, fixed point, linearity") {
  Rng rng(1);
  const MatrixF zx = random_matrix(6, 4, rng).cast<float>();
  const MatrixF zy = random_matrix(6, 3, rng).cast<float>();

  const auto hi = fuse_mix(zx, zy, 1.0 - kLambdaClamp);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(hi.z_x(i, j) - zx(i, j)) < 1e-5);

  const auto half = fuse_mix(MatrixF{{1, 0}, {0, 1}}, MatrixF{{2}, {4}}, 0.5);
  CHECK(half.z_x == MatrixF{{0.5f, 0.5f}});
  CHECK(half.z_y == MatrixF{{3.0f}});

  MatrixF same(4, 4);
  for (std::size_t j = 0; j < 4; ++j) same(0, j) = same(2, j) = static_cast<float>(j + 1), same(1, j) = same(3, j) = -1.0f;
  for (double lam : {0.1, 0.37, 0.9}) {
    const auto m = fuse_mix(same, same, lam);
    CHECK(m.z_x == same.slice_rows(0, 2));
  }

  for (double lam : {1e-6, 0.25, 0.5, 0.77, 1.0 - 1e-6}) {
    const auto m = fuse_mix(zx, zy, lam);
    CHECK(m.lambda_x == m.lambda_y);
    CHECK(m.lambda_x == lam);
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j)
        worst = std::max(worst, std::abs(m.z_x(i, j) - (lam * zx(i, j) + (1 - lam) * zx(i + 3, j))));
      for (std::size_t j = 0; j < 3; ++j)
        worst = std::max(worst, std::abs(m.z_y(i, j) - (lam * zy(i, j) + (1 - lam) * zy(i + 3, j))));
    }
    CHECK(worst <= 1e-6);
  }

  CHECK_THROWS_WITH_AS(fuse_mix(MatrixF(3, 2), MatrixF(3, 2), 0.5), doctest::Contains("even"), Error);
  CHECK_THROWS_AS(fuse_mix(zx, zy, 0.0), Error);
  CHECK_THROWS_AS(fuse_mix(zx, zy, 1.0), Error);
}

TEST_CASE("gaussian_noise: identity at zero and Monte-Carlo std") {
  Rng rng(2);
  const MatrixF x = random_matrix(10, 10, rng).cast<float>();
  CHECK(gaussian_noise(x, 0.0, 3) == x);
  CHECK(gaussian_noise(x, 0.5, 3) == gaussian_noise(x, 0.5, 3));

  const MatrixF zeros(1000, 1000);
  const MatrixF noisy = gaussian_noise(zeros, 0.01, 11);
  double s = 0.0, s2 = 0.0;
  for (float v : noisy.values()) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double mean = s / 1e6;
  const double sd = std::sqrt(s2 / 1e6 - mean * mean);
  CHECK(sd >= 0.0099);
  CHECK(sd <= 0.0101);
}

TEST_CASE("random_quantize: bin-width bound, midpoints, constant columns") {
  Rng rng(4);
  MatrixF smooth(64, 3);
  for (std::size_t i = 0; i < 64; ++i) {
    smooth(i, 0) = static_cast<float>(std::sin(0.1 * static_cast<double>(i)));
    smooth(i, 1) = static_cast<float>(0.01 * static_cast<double>(i));
    smooth(i, 2) = 0.25f;  // constant
  }
  const int huge = 1 << 20;
  const MatrixF q = random_quantize(smooth, huge, huge, 1);
  for (std::size_t j = 0; j < 2; ++j) {
    float lo = smooth(0, j), hi = smooth(0, j);
    for (std::size_t i = 0; i < 64; ++i) lo = std::min(lo, smooth(i, j)), hi = std::max(hi, smooth(i, j));
    for (std::size_t i = 0; i < 64; ++i)
      CHECK(std::abs(q(i, j) - smooth(i, j)) <= (hi - lo) / static_cast<float>(huge) + 1e-7f);
  }
  for (std::size_t i = 0; i < 64; ++i) CHECK(q(i, 2) == 0.25f);

  // Column range [0, 1] with k = 2 has midpoints 0.25 and 0.75.
  const MatrixF m{{0.0f}, {0.25f}, {0.75f}, {1.0f}};
  const MatrixF qm = random_quantize(m, 2, 2, 9);
  CHECK(qm(1, 0) == 0.25f);
  CHECK(qm(2, 0) == 0.75f);
  CHECK(qm(0, 0) == 0.25f);
  CHECK(qm(3, 0) == 0.75f);

  CHECK(random_quantize(smooth, 2, 32, 5) == random_quantize(smooth, 2, 32, 5));
  CHECK_THROWS_AS(random_quantize(smooth, 1, 4, 0), Error);
}

TEST_CASE("augment_batch: schemes preserve shape and finiteness") {
  Rng rng(6);
  const MatrixF zx = random_matrix(8, 5, rng).cast<float>();
  const MatrixF zy = random_matrix(8, 3, rng).cast<float>();
  for (auto scheme : {MixScheme::kFuseMix, MixScheme::kGaussian, MixScheme::kRandomQuantize, MixScheme::kNone}) {
    MixConfig c;
    c.scheme = scheme;
    const auto m = augment_batch(zx, zy, c, 17);
    CHECK(m.z_x.rows() == 4);
    CHECK(m.z_x.cols() == 5);
    CHECK(m.z_y.rows() == 4);
    CHECK(m.z_y.cols() == 3);
    CHECK(m.z_x.all_finite());
    CHECK(m.z_y.all_finite());
    CHECK(augment_batch(zx, zy, c, 17).z_x == m.z_x);
  }
  MixConfig none;
  none.scheme = MixScheme::kNone;
  const auto m = augment_batch(zx, zy, none, 1);
  CHECK(m.z_x == zx.slice_rows(0, 4));
  CHECK(m.z_y == zy.slice_rows(0, 4));

  MixConfig fm;
  const auto f = augment_batch(zx, zy, fm, 23);
  CHECK(f.lambda_x == sample_beta(1.0, 23));
  CHECK(f.z_x == fuse_mix(zx, zy, f.lambda_x).z_x);
}

TEST_CASE("mix config parsing and validation") {
  CHECK(parse_mix_scheme("fusemix") == MixScheme::kFuseMix);
  CHECK(parse_mix_scheme("rq") == MixScheme::kRandomQuantize);
  CHECK_THROWS_AS(parse_mix_scheme("cutmix"), Error);
  MixConfig c;
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = MixConfig{};
  c.bins_lo = 5;
  c.bins_hi = 4;
  CHECK_THROWS_AS(c.validate(), Error);
}
