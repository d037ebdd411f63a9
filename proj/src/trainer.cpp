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

#include "fusemix/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "fusemix/augment.hpp"
#include "fusemix/objective.hpp"

namespace fusemix {

namespace {

void check_store(const TrainConfig& c, const StoreHandle& store) {
  require(store.dim_x() == c.adapter_x.input_dim,
          "store/config mismatch: x latents have dim " + std::to_string(store.dim_x()) +
              ", adapter expects " + std::to_string(c.adapter_x.input_dim));
  require(store.dim_y() == c.adapter_y.input_dim,
          "store/config mismatch: y latents have dim " + std::to_string(store.dim_y()) +
              ", adapter expects " + std::to_string(c.adapter_y.input_dim));
  require(2 * c.batch_b <= store.count(), "batch of 2B = " + std::to_string(2 * c.batch_b) +
                                              " rows exceeds dataset count " +
                                              std::to_string(store.count()));
}

struct SlotRefs {
  std::vector<Matrix<float>*> values;
  std::vector<bool> decay;
};

void collect(AdapterParams<float>& p, SlotRefs& refs) {
  visit_params(p, [&](const std::string&, Matrix<float>& m, ParamKind kind) {
    refs.values.push_back(&m);
    refs.decay.push_back(kind != ParamKind::kNorm);
  });
}

void collect_grads(const AdapterParams<float>& g, std::vector<const Matrix<float>*>& out) {
  visit_params(g, [&](const std::string&, const Matrix<float>& m, ParamKind) { out.push_back(&m); });
}

void require_finite(const AdapterParams<float>& p, std::uint64_t step) {
  visit_params(p, [&](const std::string& name, const Matrix<float>& m, ParamKind) {
    require(m.all_finite(), "non-finite parameter " + name + " after step " + std::to_string(step));
  });
}

void apply_update(Checkpoint& ck, const StepResult<float>& grads, double lr_now, const OptimConfig& oc) {
  SlotRefs refs;
  collect(ck.params_x, refs);
  collect(ck.params_y, refs);
  std::vector<const Matrix<float>*> g;
  collect_grads(grads.grad_x.dparams, g);
  collect_grads(grads.grad_y.dparams, g);
  const bool learn_t = ck.config.loss.learnable_t;
  const std::size_t n_slots = refs.values.size() + (learn_t ? 1 : 0);
  if (ck.optim.slots.empty()) ck.optim.slots.resize(n_slots);
  require(ck.optim.slots.size() == n_slots, "optimizer state does not match parameters");
  ++ck.optim.step;
  for (std::size_t i = 0; i < refs.values.size(); ++i)
    adamw_update<float>(refs.values[i]->values(), g[i]->values(), ck.optim.slots[i], ck.optim.step,
                        lr_now, refs.decay[i], oc);
  if (learn_t) {
    adamw_update<double>(std::span<double>(&ck.log_t, 1), std::span<const double>(&grads.dlog_t, 1),
                         ck.optim.slots.back(), ck.optim.step, lr_now, false, oc);
    Temperature t{ck.log_t};
    t.clamp(ck.config.loss.max_logit_scale);
    ck.log_t = t.log_t;
  }
  ++ck.params_x.version;
  ++ck.params_y.version;
}

std::string epoch_name(std::size_t epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

Checkpoint run(Checkpoint ck, const StoreHandle& store, const TrainOptions& options) {
  const TrainConfig& c = ck.config;
  check_store(c, store);
  const OptimConfig oc = resolved_optim(c, store.count());
  const std::size_t per_epoch = steps_per_epoch(store.count(), c.batch_b);
  require(ck.step == ck.epoch * per_epoch, "checkpoint step counter does not match the store size");
  const std::size_t last_epoch = std::min(c.epochs, options.stop_after_epoch.value_or(c.epochs));

  std::optional<EvalSet> owned_eval;
  const EvalSet* eval = options.eval_set;
  if (!eval && !c.eval_manifest.empty() && c.eval_every > 0) {
    owned_eval = EvalSet::from_store(StoreHandle::open(c.eval_manifest));
    eval = &*owned_eval;
  }

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    metrics.open(options.out_dir / kMetricsFile, std::ios::app);
    require(static_cast<bool>(metrics), "cannot open metrics log in " + options.out_dir.string());
    std::ofstream(options.out_dir / kConfigEcho, std::ios::trunc) << c.to_text();
  }

  while (ck.epoch < last_epoch) {
    const std::size_t epoch = ck.epoch + 1;
    const EpochBatches batches(store, 2 * c.batch_b, derive_seed(c.seed, Stream::kShuffle, ck.epoch));
    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t i = 0; i < batches.size(); ++i) {
      const std::uint64_t step = ck.step;
      const Batch batch = batches[i];
      const MixedBatch mixed =
          augment_batch(batch.z_x, batch.z_y, c.augment, derive_seed(c.seed, Stream::kMix, step));
      const StepResult<float> res =
          step_loss(ck.params_x, ck.params_y, ck.log_t, mixed.z_x, mixed.z_y, Mode::kTrain,
                    derive_seed(c.seed, Stream::kDropout, step));
      require(std::isfinite(res.report.loss), "non-finite loss at step " + std::to_string(step));
      const double lr = lr_at(step, oc);
      apply_update(ck, res, lr, oc);
      require_finite(ck.params_x, step);
      require_finite(ck.params_y, step);
      for (const auto& s : ck.optim.slots)
        for (std::size_t k = 0; k < s.m.size(); ++k)
          require(std::isfinite(s.m[k]) && std::isfinite(s.v[k]),
                  "non-finite optimizer moment after step " + std::to_string(step));
      ++ck.step;

      StepRecord rec{epoch, step, res.report.loss, res.report.loss_xy, res.report.loss_yx,
                     res.report.logit_scale, lr, mixed.lambda_x};
      if (metrics.is_open()) metrics << rec.to_json() << "\n";
      if (options.on_step) options.on_step(rec);
      em.mean_loss += rec.loss;
      em.mean_loss_xy += rec.loss_xy;
      em.mean_loss_yx += rec.loss_yx;
      em.lr = lr;
    }
    const double n = static_cast<double>(batches.size());
    em.mean_loss /= n;
    em.mean_loss_xy /= n;
    em.mean_loss_yx /= n;
    em.logit_scale = std::exp(ck.log_t);
    ck.epoch = epoch;
    if (eval && c.eval_every > 0 && epoch % c.eval_every == 0) {
      const auto reports = evaluate(ck.params_x, ck.params_y, *eval, {1});
      em.recall_xy_at1 = reports[0].recalls[0];
      em.recall_yx_at1 = reports[1].recalls[0];
    }
    ck.history.push_back(em);
    if (!options.out_dir.empty() && c.checkpoint_every > 0 && epoch % c.checkpoint_every == 0)
      ck.save(options.out_dir / epoch_name(epoch));
  }
  if (!options.out_dir.empty()) ck.save(options.out_dir / kLastCheckpoint);
  return ck;
}

}  // namespace

std::string StepRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch},     {"step", step},
                      {"loss", loss},       {"loss_xy", loss_xy},
                      {"loss_yx", loss_yx}, {"logit_scale", logit_scale},
                      {"lr", lr}};
  j["lambda"] = std::isfinite(lambda) ? nlohmann::json(lambda) : nlohmann::json(nullptr);
  return j.dump();
}

std::size_t steps_per_epoch(std::size_t count, std::size_t batch_b) {
  require(batch_b >= 1, "batch size must be positive");
  return count / (2 * batch_b);
}

OptimConfig resolved_optim(const TrainConfig& config, std::size_t count) {
  OptimConfig oc = config.optim;
  const std::size_t per_epoch = steps_per_epoch(count, config.batch_b);
  oc.total_steps = static_cast<std::uint64_t>(per_epoch) * config.epochs;
  oc.warmup_steps = std::min<std::uint64_t>(config.warmup_steps.value_or(per_epoch), oc.total_steps);
  oc.validate();
  return oc;
}

Checkpoint init_checkpoint(TrainConfig config, const StoreHandle& store) {
  if (config.adapter_x.input_dim == 0) config.adapter_x.input_dim = store.dim_x();
  if (config.adapter_y.input_dim == 0) config.adapter_y.input_dim = store.dim_y();
  config.validate();
  check_store(config, store);
  Checkpoint ck;
  ck.params_x = init_adapter<float>(config.adapter_x, derive_seed(config.seed, 0, 10));
  ck.params_y = init_adapter<float>(config.adapter_y, derive_seed(config.seed, 1, 10));
  ck.log_t = std::log(config.loss.init_logit_scale);
  ck.config = std::move(config);
  return ck;
}

Checkpoint train(const StoreHandle& store, const TrainConfig& config, const TrainOptions& options) {
  if (!options.out_dir.empty()) fs::remove(options.out_dir / kMetricsFile);
  return run(init_checkpoint(config, store), store, options);
}

Checkpoint resume(Checkpoint checkpoint, const StoreHandle& store, const TrainOptions& options) {
  checkpoint.config.validate();
  check_store(checkpoint.config, store);
  if (checkpoint.epoch >= checkpoint.config.epochs) return checkpoint;
  return run(std::move(checkpoint), store, options);
}

}  // namespace fusemix
