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
#include <fstream>

#include "fusemix/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace fusemix;
using fusemix::testing::TempDir;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.batch_b = 50;
  c.epochs = 4;
  c.seed = 3;
  for (AdapterConfig* a : {&c.adapter_x, &c.adapter_y}) {
    a->shared_dim = 8;
    a->depth = 1;
    a->expansion_factor = 2;
    a->dropout_p = 0.1;
  }
  c.optim.lr = 3e-3;
  return c;
}

StoreHandle small_store(std::size_t n = 400) {
  auto s = synth_aligned(n, 12, 10, 4, 0.01, 17);
  return StoreHandle::from_matrices(std::move(s.x), std::move(s.y));
}

}  // namespace

TEST_CASE("train: loss decreases and every step record is finite") {
  const StoreHandle store = small_store();
  TrainConfig c = small_config();
  c.epochs = 10;
  std::vector<StepRecord> steps;
  TrainOptions opt;
  opt.on_step = [&](const StepRecord& r) { steps.push_back(r); };
  const Checkpoint ck = train(store, c, opt);
  REQUIRE(steps.size() == 40);
  CHECK(ck.step == 40);
  CHECK(ck.epoch == 10);
  CHECK(ck.history.size() == 10);
  for (const auto& r : steps) {
    CHECK(std::isfinite(r.loss));
    CHECK(std::isfinite(r.logit_scale));
    CHECK(r.lambda >= 0.0);
    CHECK(r.lambda <= 1.0);
  }
  CHECK(ck.history.back().mean_loss < 0.7 * ck.history.front().mean_loss);
  CHECK(steps.front().lr == doctest::Approx(1e-6));
}

TEST_CASE("train: one epoch on noiseless data lowers the loss below the first step") {
  auto s = synth_aligned(400, 12, 10, 4, 0.0, 23);
  const StoreHandle store = StoreHandle::from_matrices(std::move(s.x), std::move(s.y));
  TrainConfig c = small_config();
  c.batch_b = 100;
  c.epochs = 1;
  c.warmup_steps = 0;
  c.optim.lr = 1e-2;
  double first = 0.0;
  TrainOptions opt;
  opt.on_step = [&](const StepRecord& r) {
    if (r.step == 0) first = r.loss;
  };
  const Checkpoint ck = train(store, c, opt);
  CHECK(ck.history.back().mean_loss < first);
}

TEST_CASE("train: one-block adapters reach the ridge-regression oracle on held-out pairs") {
  auto all = synth_aligned(1100, 64, 48, 8, 0.01, 31);
  const MatrixF tx = all.x.slice_rows(0, 1000), ty = all.y.slice_rows(0, 1000);
  const MatrixF hx = all.x.slice_rows(1000, 1100), hy = all.y.slice_rows(1000, 1100);
  // The pairs are linearly related, so ridge regression gives the achievable level.
  const double oracle = fusemix::testing::ridge_retrieval_recall(tx, ty, hx, hy, 1e-3);
  CHECK(oracle >= 0.95);

  TrainConfig c;
  c.batch_b = 100;
  c.epochs = 20;
  c.adapter_x.depth = c.adapter_y.depth = 1;
  c.adapter_x.shared_dim = c.adapter_y.shared_dim = 64;
  const StoreHandle store = StoreHandle::from_matrices(tx, ty);
  const EvalSet held = EvalSet::from_groups(hx, hy, {});
  TrainOptions opt;
  opt.eval_set = &held;
  c.eval_every = 20;
  const Checkpoint ck = train(store, c, opt);
  CHECK(ck.history.back().recall_xy_at1 >= 0.95);
  CHECK(ck.history.back().recall_yx_at1 >= 0.95);
}

TEST_CASE("train: logit scale stays clamped at the maximum") {
  // Identical sides through identity adapters: only log_t learns, and a
  // sharper softmax always lowers the loss.
  auto pairs = synth_aligned(400, 12, 10, 4, 0.0, 2);
  const StoreHandle store = StoreHandle::from_matrices(pairs.x, pairs.x);
  TrainConfig c = small_config();
  for (AdapterConfig* a : {&c.adapter_x, &c.adapter_y}) {
    a->identity = true;
    a->shared_dim = 12;
  }
  c.loss.init_logit_scale = 99.0;
  c.warmup_steps = 0;
  c.optim.lr = 0.5;
  std::size_t steps = 0;
  double highest = 0.0;
  TrainOptions opt;
  opt.on_step = [&](const StepRecord& r) {
    CHECK(r.logit_scale <= 100.0);
    highest = std::max(highest, r.logit_scale);
    ++steps;
  };
  const Checkpoint ck = train(store, c, opt);
  CHECK(steps == 16);
  CHECK(std::exp(ck.log_t) <= 100.0);
  // The first update pushes past 100 and is clamped back.
  CHECK(highest == doctest::Approx(100.0));
}

TEST_CASE("train: precondition errors") {
  const StoreHandle store = small_store(90);
  TrainConfig c = small_config();
  CHECK_THROWS_WITH_AS(train(store, c), doctest::Contains("exceeds dataset count"), Error);
  c.batch_b = 10;
  c.adapter_x.input_dim = 7;
  CHECK_THROWS_WITH_AS(train(store, c), doctest::Contains("store/config mismatch"), Error);
}

TEST_CASE("train: identical seeds give bit-identical checkpoints") {
  TempDir a, b;
  const StoreHandle store = small_store();
  TrainOptions oa, ob;
  oa.out_dir = a.path();
  ob.out_dir = b.path();
  train(store, small_config(), oa);
  train(store, small_config(), ob);
  std::ifstream fa(a / "last", std::ios::binary), fb(b / "last", std::ios::binary);
  const std::string sa{std::istreambuf_iterator<char>(fa), {}}, sb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(!sa.empty());
  CHECK(sa == sb);

  TrainConfig other = small_config();
  other.seed = 4;
  CHECK(train(store, other).serialize() != Checkpoint::load(a / "last").serialize());
}

TEST_CASE("resume: interrupted run equals uninterrupted run") {
  TempDir dir;
  const StoreHandle store = small_store();
  TrainConfig c = small_config();
  c.checkpoint_every = 1;
  TrainOptions full_opt;
  full_opt.out_dir = dir / "full";
  const Checkpoint full = train(store, c, full_opt);

  TrainOptions half;
  half.out_dir = dir / "part";
  half.stop_after_epoch = 2;
  train(store, c, half);
  const Checkpoint mid = Checkpoint::load(dir / "part" / "last");
  CHECK(mid.epoch == 2);
  TrainOptions rest;
  rest.out_dir = dir / "part";
  const Checkpoint resumed = resume(mid, store, rest);
  CHECK(resumed.serialize() == full.serialize());

  // Metrics from the split run match the single run line for line.
  std::ifstream m1(dir / "full" / "metrics.ndjson"), m2(dir / "part" / "metrics.ndjson");
  const std::string s1{std::istreambuf_iterator<char>(m1), {}}, s2{std::istreambuf_iterator<char>(m2), {}};
  CHECK(s1 == s2);
  CHECK(fs::exists(dir / "full" / "epoch_0003.ckpt"));

  // Completed run: resume is a no-op.
  CHECK(resume(full, store).serialize() == full.serialize());

  // Store with other dims.
  auto wrong = synth_aligned(400, 11, 10, 4, 0.01, 1);
  const StoreHandle other = StoreHandle::from_matrices(std::move(wrong.x), std::move(wrong.y));
  CHECK_THROWS_WITH_AS(resume(mid, other), doctest::Contains("store/config mismatch"), Error);
}

TEST_CASE("train: first-step loss is near ln(B) at initialization") {
  // Random-direction latents make the initial embeddings close to independent.
  Rng rng(5);
  const StoreHandle store = StoreHandle::from_matrices(
      fusemix::testing::random_matrix(1024, 32, rng).cast<float>(),
      fusemix::testing::random_matrix(1024, 24, rng).cast<float>());
  TrainConfig c = small_config();
  c.batch_b = 256;
  c.epochs = 1;
  c.adapter_x.shared_dim = c.adapter_y.shared_dim = 512;
  c.augment.scheme = MixScheme::kNone;
  double first = -1.0;
  TrainOptions opt;
  opt.on_step = [&](const StepRecord& r) {
    if (r.step == 0) first = r.loss;
  };
  train(store, c, opt);
  CHECK(std::abs(first - std::log(256.0)) < 0.05 * std::log(256.0));
}

TEST_CASE("train: in-training evaluation and output files") {
  TempDir dir;
  const StoreHandle store = small_store();
  auto held = synth_aligned(100, 12, 10, 4, 0.01, 17);
  const EvalSet eval = EvalSet::from_groups(held.x, held.y, {});
  TrainConfig c = small_config();
  c.eval_every = 2;
  TrainOptions opt;
  opt.out_dir = dir.path();
  opt.eval_set = &eval;
  const Checkpoint ck = train(store, c, opt);
  CHECK(ck.history[0].recall_xy_at1 == -1.0);
  CHECK(ck.history[1].recall_xy_at1 >= 0.0);
  CHECK(ck.history[3].recall_yx_at1 >= 0.0);
  CHECK(TrainConfig::parse([&] {
          std::ifstream in(dir / "config.toml");
          return std::string{std::istreambuf_iterator<char>(in), {}};
        }()) == ck.config);
  std::ifstream m(dir / "metrics.ndjson");
  std::size_t lines = 0;
  for (std::string line; std::getline(m, line);) ++lines;
  CHECK(lines == 16);
}

TEST_CASE("resolved_optim: schedule spans all epochs, warmup defaults to one epoch") {
  TrainConfig c = small_config();
  const OptimConfig oc = resolved_optim(c, 400);
  CHECK(oc.total_steps == 16);
  CHECK(oc.warmup_steps == 4);
  c.warmup_steps = 0;
  CHECK(resolved_optim(c, 400).warmup_steps == 0);
  CHECK(steps_per_epoch(10, 2) == 2);
}

TEST_CASE("config: text round trip, presets and overrides") {
  TrainConfig c = TrainConfig::audio_text();
  c.seed = 77;
  c.warmup_steps = 12;
  c.eval_manifest = "held out/manifest.json";
  c.augment.scheme = MixScheme::kGaussian;
  c.adapter_x.input_dim = 768;
  c.adapter_y.identity = true;
  c.optim.beta2 = 0.98;
  const TrainConfig back = TrainConfig::parse(c.to_text());
  CHECK(back == c);
  CHECK(back.hash() == c.hash());
  c.seed = 78;
  CHECK(back.hash() != c.hash());

  const TrainConfig a = TrainConfig::audio_text();
  CHECK(a.adapter_x.depth == 2);
  CHECK(a.optim.lr == doctest::Approx(1e-4));
  CHECK(a.optim.weight_decay == doctest::Approx(0.5));
  CHECK(a.batch_b == 2000);
  CHECK(a.epochs == 50);
  const TrainConfig i = TrainConfig::image_text();
  CHECK(i.adapter_y.depth == 4);
  CHECK(i.batch_b == 20000);
  CHECK(i.epochs == 500);
  CHECK(i.optim.weight_decay == doctest::Approx(0.1));

  const TrainConfig p = TrainConfig::parse(
      "# comment\n[train]\npreset = \"audio_text\"\nseed = 5\n[adapter]\ndepth = 3\n"
      "[adapter_y]\nshared_dim = 64\n[optim]\nbetas = [0.8, 0.9]\n");
  CHECK(p.seed == 5);
  CHECK(p.batch_b == 2000);
  CHECK(p.adapter_x.depth == 3);
  CHECK(p.adapter_y.depth == 3);
  CHECK(p.adapter_y.shared_dim == 64);
  CHECK(p.adapter_x.shared_dim == 512);
  CHECK(p.optim.beta1 == doctest::Approx(0.8));

  CHECK_THROWS_AS(TrainConfig::parse("[train]\nbogus = 1\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("[train]\nbatch_b = many\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("[adapter]\ndropout = 1.5\n"), Error);
}

TEST_CASE("checkpoint: serialize round trip and corruption detection") {
  const StoreHandle store = small_store();
  TrainConfig c = small_config();
  c.epochs = 1;
  const Checkpoint ck = train(store, c);
  const auto bytes = ck.serialize();
  const Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.config == ck.config);
  CHECK(back.params_x.blocks[0].up.weight == ck.params_x.blocks[0].up.weight);
  CHECK(back.log_t == ck.log_t);
  CHECK(back.history == ck.history);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_WITH_AS(Checkpoint::deserialize(truncated), doctest::Contains("corrupt checkpoint"), Error);
  auto magic = bytes;
  magic[0] = 'Z';
  CHECK_THROWS_WITH_AS(Checkpoint::deserialize(magic), doctest::Contains("corrupt checkpoint"), Error);
  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/ckpt"), Error);
}
