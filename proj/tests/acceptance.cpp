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

// Acceptance suite: one PASS/FAIL line per release criterion, nonzero exit
// if any fails. Runs standalone or under ctest.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fusemix/diversity.hpp"
#include "fusemix/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace fusemix;
using namespace fusemix::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Every adapter parameter on both sides plus log_t, 64-bit, dropout off.
Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  AdapterConfig c;
  c.input_dim = 16;
  c.shared_dim = 8;
  c.depth = 2;
  c.dropout_p = 0.0;
  auto px = init_adapter<double>(c, 1);
  auto py = init_adapter<double>(c, 2);
  Rng rng(3);
  // Perturb LayerNorm gains/biases away from their 1/0 init so their
  // gradients are exercised in a generic configuration.
  for (auto* p : {&px, &py})
    visit_params(*p, [&](const std::string&, MatrixD& m, ParamKind) {
      for (double& v : m.values()) v += 0.1 * rng.normal();
    });
  const MatrixD zx = random_matrix(4, 16, rng), zy = random_matrix(4, 16, rng);
  double log_t = std::log(5.0);
  const auto res = step_loss(px, py, log_t, zx, zy, Mode::kTrain, 11);
  const auto f = [&] { return step_loss(px, py, log_t, zx, zy, Mode::kTrain, 11).report.loss; };

  double worst = rel_err(res.dlog_t, central_diff(&log_t, 1e-6, f));
  std::size_t checked = 1;
  auto gx = res.grad_x.dparams;
  auto gy = res.grad_y.dparams;
  for (auto [p, g] : {std::pair{&px, &gx}, std::pair{&py, &gy}}) {
    const auto ptr = param_pointers(*p);
    const auto gptr = param_pointers(*g);
    for (std::size_t i = 0; i < ptr.size(); ++i, ++checked)
      worst = std::max(worst, rel_err(*gptr[i], central_diff(ptr[i], 1e-5, f)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0, std::to_string(checked) + " values, max rel err " + fmt(worst) +
                                            ", " + fmt(secs) + " s"};
}

Outcome loss_calibration() {
  std::string detail;
  bool pass = true;
  for (std::size_t b : {256, 1024}) {
    Rng rng(b);
    const MatrixD sx = random_unit_rows(b, 512, rng), sy = random_unit_rows(b, 512, rng);
    const double loss = symmetric_infonce(sx, sy, Temperature{}.log_t).report.loss;
    const double rel = std::abs(loss - std::log(static_cast<double>(b))) / std::log(static_cast<double>(b));
    pass = pass && rel <= 0.05;
    detail += "B=" + std::to_string(b) + " loss " + fmt(loss) + " (" + fmt(100 * rel) + "% from ln B); ";
  }
  const MatrixD ortho{{1, 0}, {0, 1}};
  const double two = symmetric_infonce(ortho, ortho, 0.0).report.loss;
  const double err = std::abs(two - std::log1p(std::exp(-1.0)));
  pass = pass && err <= 1e-6;
  detail += "B=2 orthonormal error " + fmt(err);
  return {pass, detail};
}

Outcome fusemix_algebra() {
  double worst = 0.0;
  bool shared = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const MatrixF zx = random_matrix(2 * 16, 12, rng).cast<float>();
    const MatrixF zy = random_matrix(2 * 16, 9, rng).cast<float>();
    const MixedBatch m = augment_batch(zx, zy, MixConfig{}, s);
    shared = shared && m.lambda_x == m.lambda_y;
    const double lam = m.lambda_x;
    for (auto [src, mixed] : {std::pair{&zx, &m.z_x}, std::pair{&zy, &m.z_y}})
      for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < src->cols(); ++c) {
          const double expect = lam * (*src)(r, c) + (1.0 - lam) * (*src)(r + 16, c);
          worst = std::max(worst, std::abs(expect - static_cast<double>((*mixed)(r, c))));
        }
  }
  std::vector<double> draws(100000);
  for (std::size_t i = 0; i < draws.size(); ++i) draws[i] = sample_beta(1.0, derive_seed(42, Stream::kMix, i));
  const double ks = ks_uniform(draws);
  return {worst <= 1e-6 && shared && ks < 0.01, "max mix error " + fmt(worst) + ", lambda shared " +
                                                    (shared ? "yes" : "no") + ", KS " + fmt(ks)};
}

TrainConfig end_to_end_config(MixScheme scheme) {
  TrainConfig c;
  c.batch_b = 256;
  c.epochs = 30;
  c.seed = 5;
  c.adapter_x.depth = c.adapter_y.depth = 2;
  c.augment.scheme = scheme;
  c.eval_every = 30;
  return c;
}

Outcome synthetic_end_to_end() {
  auto all = synth_aligned(5000, 64, 48, 8, 0.01, 1);
  const StoreHandle train_store =
      StoreHandle::from_matrices(all.x.slice_rows(0, 4500), all.y.slice_rows(0, 4500));
  const EvalSet held = EvalSet::from_groups(all.x.slice_rows(4500, 5000), all.y.slice_rows(4500, 5000), {});
  TrainOptions opt;
  opt.eval_set = &held;
  double r[2][2] = {};
  double secs[2] = {};
  const MixScheme schemes[2] = {MixScheme::kFuseMix, MixScheme::kNone};
  for (int i = 0; i < 2; ++i) {
    const auto t0 = Clock::now();
    const Checkpoint ck = train(train_store, end_to_end_config(schemes[i]), opt);
    secs[i] = seconds_since(t0);
    r[i][0] = ck.history.back().recall_xy_at1;
    r[i][1] = ck.history.back().recall_yx_at1;
  }
  const double fm = std::min(r[0][0], r[0][1]), off = std::min(r[1][0], r[1][1]);
  const bool pass = fm >= 0.95 && off >= 0.95 && fm >= off - 0.02 && secs[0] < 300 && secs[1] < 300;
  return {pass, "FuseMix R@1 " + fmt(r[0][0]) + "/" + fmt(r[0][1]) + " (" + fmt(secs[0]) + " s), off " +
                    fmt(r[1][0]) + "/" + fmt(r[1][1]) + " (" + fmt(secs[1]) + " s)"};
}

Outcome dpp_correctness() {
  std::size_t sequence_match = 0;
  double worst_logdet = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(7000 + s);
    const std::size_t n = 2 + rng.below(9);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(5, n));
    const MatrixD l = random_psd(n, n, rng);
    const auto got = greedy_kdpp(l, k);
    if (got.indices == brute_force_greedy(l, k)) ++sequence_match;
    worst_logdet = std::max(worst_logdet, rel_err(got.log_det(), std::log(submatrix_det(l, got.indices)), 1e-12));
  }
  bool diag_ok = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const std::size_t n = 2 + rng.below(10);
    MatrixD d(n, n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
      d(i, i) = 0.1 + rng.uniform();
      order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d(a, a) > d(b, b); });
    const std::size_t k = 1 + rng.below(n);
    order.resize(k);
    diag_ok = diag_ok && greedy_kdpp(d, k).indices == order;
  }
  return {sequence_match == 50 && worst_logdet < 1e-6 && diag_ok,
          std::to_string(sequence_match) + "/50 sequences match brute force, max log-det rel err " +
              fmt(worst_logdet) + ", diagonal cases " + (diag_ok ? "ok" : "wrong")};
}

// 4 Gaussian clusters around random unit directions in 16 dims, 250 each.
Outcome diversity_effect() {
  double dpp_min = 0.0, uni_min = 0.0;
  std::size_t dpp_full_cover = 0;
  const std::size_t per = 250, d = 16, k = 40;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(900, Stream::kSynth, s));
    const MatrixD centers = random_unit_rows(4, d, rng);
    MatrixF z(4 * per, d);
    std::vector<std::size_t> label(4 * per);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < per; ++i) {
        label[c * per + i] = c;
        for (std::size_t j = 0; j < d; ++j)
          z(c * per + i, j) = static_cast<float>(centers(c, j) + 0.1 * rng.normal());
      }
    const auto min_count = [&](const std::vector<std::size_t>& idx) {
      std::array<std::size_t, 4> n{};
      for (std::size_t i : idx) ++n[label[i]];
      return static_cast<double>(*std::min_element(n.begin(), n.end()));
    };
    const double dm = min_count(greedy_kdpp(build_kernel(z, KernelKind::kPoly2), k).indices);
    dpp_min += dm;
    dpp_full_cover += dm > 0 ? 1 : 0;
    uni_min += min_count(uniform_subset(z.rows(), k, s));
  }
  dpp_min /= 100.0;
  uni_min /= 100.0;
  return {dpp_min >= uni_min, "mean min-per-cluster DPP " + fmt(dpp_min) + " vs uniform " + fmt(uni_min) +
                                  ", DPP covered all clusters in " + std::to_string(dpp_full_cover) + "/100"};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  TempDir dir;
  auto pairs = synth_aligned(1200, 32, 24, 6, 0.01, 3);
  const StoreHandle store = StoreHandle::from_matrices(std::move(pairs.x), std::move(pairs.y));
  TrainConfig c;
  c.batch_b = 100;
  c.epochs = 6;
  c.seed = 21;
  c.adapter_x.depth = c.adapter_y.depth = 2;
  c.adapter_x.shared_dim = c.adapter_y.shared_dim = 64;

  TrainOptions a, b, part;
  a.out_dir = dir / "a";
  b.out_dir = dir / "b";
  part.out_dir = dir / "part";
  train(store, c, a);
  train(store, c, b);
  const std::string ca = file_bytes(dir / "a" / kLastCheckpoint), cb = file_bytes(dir / "b" / kLastCheckpoint);
  const bool repeat = !ca.empty() && ca == cb;

  part.stop_after_epoch = 3;
  train(store, c, part);
  part.stop_after_epoch.reset();
  resume(Checkpoint::load(dir / "part" / kLastCheckpoint), store, part);
  const bool resumed = file_bytes(dir / "part" / kLastCheckpoint) == ca &&
                       file_bytes(dir / "part" / kMetricsFile) == file_bytes(dir / "a" / kMetricsFile);
  return {repeat && resumed, std::string("repeat run ") + (repeat ? "identical" : "differs") +
                                 ", 3+3 resume vs 6 epochs " + (resumed ? "identical" : "differs") + " (" +
                                 std::to_string(ca.size()) + " checkpoint bytes)"};
}

Outcome schedule() {
  OptimConfig c;
  c.lr = 1e-3;
  c.warmup_start_lr = 1e-6;
  c.final_lr = 0.0;
  c.total_steps = 1000;
  c.warmup_steps = 100;
  const auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
  const double e0 = rel(lr_at(0, c), 1e-6);
  const double ew = rel(lr_at(100, c), 1e-3);
  const double em = rel(lr_at(550, c), 0.5e-3);
  const double end = std::abs(lr_at(1000, c));
  const bool pass = e0 <= 1e-12 && ew <= 1e-12 && em <= 1e-12 && end <= 1e-15;
  return {pass, "rel errors start " + fmt(e0) + ", warmup end " + fmt(ew) + ", decay midpoint " + fmt(em) +
                    "; lr at end " + fmt(end)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"loss calibration", loss_calibration},
      {"fusemix algebra", fusemix_algebra},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"dpp correctness", dpp_correctness},
      {"diversity effect", diversity_effect},
      {"determinism", determinism},
      {"schedule", schedule},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s  %-22s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
