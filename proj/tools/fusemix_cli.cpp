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

// fusemix command-line entry point: synth, train, eval, subset, inspect.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fusemix/diversity.hpp"
#include "fusemix/retrieval.hpp"
#include "fusemix/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;

json repro(std::uint64_t seed, std::uint64_t config_hash) {
  return {{"seed", seed}, {"config_hash", fusemix::hex64(config_hash)}, {"version", FUSEMIX_VERSION}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  fusemix::require(static_cast<bool>(out), "cannot write " + path.string());
  out << text;
  fusemix::require(static_cast<bool>(out), "I/O failure writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  fusemix::require(static_cast<bool>(in), "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Prints the command result and echoes the stanza next to any outputs.
void finish(json result, const json& stanza, const fs::path& out_dir) {
  result["repro"] = stanza;
  if (!out_dir.empty()) write_text(out_dir / "repro.json", stanza.dump(2) + "\n");
  std::cout << result.dump(2) << "\n";
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::size_t n = 1000, dx = 64, dy = 48, latent = 8, holdout = 0;
  double noise = 0.01;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> tags{"x", "y"};
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic aligned pair store");
  c->add_option("--n", a.n, "Number of pairs, including held-out ones")->check(CLI::PositiveNumber);
  c->add_option("--dx", a.dx, "Dimension of x latents")->check(CLI::PositiveNumber);
  c->add_option("--dy", a.dy, "Dimension of y latents")->check(CLI::PositiveNumber);
  c->add_option("--latent", a.latent, "Dimension of the shared code")->check(CLI::PositiveNumber);
  c->add_option("--noise", a.noise, "Std of Gaussian noise added to y")->check(CLI::NonNegativeNumber);
  c->add_option("--seed", a.seed, "Random seed");
  c->add_option("--holdout", a.holdout, "Pairs moved to <out>/test/ (taken from the end)");
  c->add_option("--tags", a.tags, "Modality tags for x and y")->expected(2)->delimiter(',');
  c->add_option("--out", a.out, "Output directory")->required();
}

void run_synth(const SynthArgs& a) {
  fusemix::require(a.latent <= std::min(a.dx, a.dy), "--latent must not exceed --dx or --dy");
  fusemix::require(a.holdout < a.n, "--holdout must be smaller than --n");
  std::ostringstream canon;
  canon << "synth n=" << a.n << " dx=" << a.dx << " dy=" << a.dy << " latent=" << a.latent
        << " noise=" << a.noise << " holdout=" << a.holdout << " tags=" << a.tags[0] << "," << a.tags[1];
  const auto pairs = fusemix::synth_aligned(a.n, a.dx, a.dy, a.latent, a.noise, a.seed);
  const std::size_t train_n = a.n - a.holdout;
  const fs::path out(a.out);
  const std::array<std::string, 2> tags{a.tags[0], a.tags[1]};
  fusemix::write_store(pairs.x.slice_rows(0, train_n), pairs.y.slice_rows(0, train_n), tags, out);
  json result = {{"command", "synth"}, {"manifest", (out / fusemix::kManifestName).string()}, {"count", train_n}};
  if (a.holdout > 0) {
    fusemix::write_store(pairs.x.slice_rows(train_n, a.n), pairs.y.slice_rows(train_n, a.n), tags, out / "test");
    result["holdout_manifest"] = (out / "test" / fusemix::kManifestName).string();
    result["holdout_count"] = a.holdout;
  }
  finish(result, repro(a.seed, fusemix::fnv1a64(canon.str())), out);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest, config, out, resume, eval_manifest;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_b, stop_after;
  bool quiet = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train both adapters on a pair store");
  c->add_option("--manifest", a.manifest, "Training store manifest")->required()->check(CLI::ExistingFile);
  c->add_option("--config", a.config, "Config file (key = value with [section] headers)")
      ->check(CLI::ExistingFile);
  c->add_option("--set", a.sets, "Override one config key, e.g. --set optim.lr=3e-4 (repeatable)");
  c->add_option("--seed", a.seed, "Overrides train.seed");
  c->add_option("--epochs", a.epochs, "Overrides train.epochs")->check(CLI::PositiveNumber);
  c->add_option("--batch-b", a.batch_b, "Overrides train.batch_b")->check(CLI::PositiveNumber);
  c->add_option("--eval-manifest", a.eval_manifest, "Held-out store for per-epoch Recall@1")
      ->check(CLI::ExistingFile);
  c->add_option("--resume", a.resume, "Continue from this checkpoint with its stored config")
      ->check(CLI::ExistingFile);
  c->add_option("--out", a.out, "Run directory (checkpoints, metrics.ndjson, config.toml)")->required();
  c->add_option("--stop-after", a.stop_after, "Stop after this many completed epochs (resumable)")
      ->check(CLI::PositiveNumber);
  c->add_flag("--quiet", a.quiet, "No per-epoch progress on stderr");
}

fusemix::TrainConfig build_config(const TrainArgs& a) {
  fusemix::TrainConfig cfg;
  if (!a.config.empty()) cfg = fusemix::TrainConfig::parse(read_text(a.config));
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    fusemix::require(eq != std::string::npos, "--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_b) cfg.batch_b = *a.batch_b;
  if (!a.eval_manifest.empty()) {
    cfg.eval_manifest = a.eval_manifest;
    if (cfg.eval_every == 0) cfg.eval_every = 1;
  }
  return cfg;
}

void run_train(const TrainArgs& a) {
  const bool resuming = !a.resume.empty();
  fusemix::require(!resuming || (a.config.empty() && a.sets.empty() && !a.seed && !a.epochs && !a.batch_b &&
                                 a.eval_manifest.empty()),
                   "--resume uses the checkpoint's config; drop the config flags");
  fusemix::TrainConfig cfg;
  std::optional<fusemix::Checkpoint> start;
  if (resuming) {
    start = fusemix::Checkpoint::load(a.resume);
    cfg = start->config;
  } else {
    cfg = build_config(a);
  }
  const fusemix::StoreHandle store = fusemix::StoreHandle::open(a.manifest);

  fusemix::TrainOptions opt;
  opt.out_dir = a.out;
  opt.stop_after_epoch = a.stop_after;
  const std::size_t per_epoch = fusemix::steps_per_epoch(store.count(), cfg.batch_b);
  double epoch_loss = 0.0;
  if (!a.quiet)
    opt.on_step = [&](const fusemix::StepRecord& r) {
      epoch_loss += r.loss;
      if ((r.step + 1) % per_epoch != 0) return;
      std::cerr << "epoch " << r.epoch << "/" << cfg.epochs << " loss " << epoch_loss / per_epoch
                << " scale " << r.logit_scale << "\n";
      epoch_loss = 0.0;
    };
  const fusemix::Checkpoint ck = resuming ? fusemix::resume(*start, store, opt) : fusemix::train(store, cfg, opt);

  json result = {{"command", "train"},
                 {"checkpoint", (fs::path(a.out) / fusemix::kLastCheckpoint).string()},
                 {"epochs_completed", ck.epoch},
                 {"steps", ck.step},
                 {"logit_scale", std::exp(ck.log_t)}};
  if (!ck.history.empty()) {
    const auto& h = ck.history.back();
    result["final_mean_loss"] = h.mean_loss;
    if (h.recall_xy_at1 >= 0.0) {
      result["final_recall_xy_at1"] = h.recall_xy_at1;
      result["final_recall_yx_at1"] = h.recall_yx_at1;
    }
  }
  finish(result, repro(ck.config.seed, ck.config.hash()), a.out);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, manifest, out;
  std::vector<std::size_t> ks{1, 5, 10};
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Recall@K of a checkpoint on a pair store, both directions");
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c->add_option("--manifest", a.manifest, "Evaluation store manifest")->required()->check(CLI::ExistingFile);
  c->add_option("--ks", a.ks, "Comma-separated K values")->delimiter(',')->check(CLI::PositiveNumber);
  c->add_option("--out", a.out, "Also write the report to this file");
}

void run_eval(EvalArgs a) {
  std::sort(a.ks.begin(), a.ks.end());
  a.ks.erase(std::unique(a.ks.begin(), a.ks.end()), a.ks.end());
  const auto reports = fusemix::eval_manifest(a.checkpoint, a.manifest, a.ks);
  const fusemix::Checkpoint ck = fusemix::Checkpoint::load(a.checkpoint);
  json result = {{"command", "eval"}, {"reports", json::parse(fusemix::reports_to_json(reports))}};
  result["repro"] = repro(ck.config.seed, ck.config.hash());
  if (!a.out.empty()) write_text(a.out, result.dump(2) + "\n");
  std::cout << result.dump(2) << "\n";
}

// ---------------------------------------------------------------- subset

struct SubsetArgs {
  std::string manifest, out, kernel = "poly2", side = "y", mode = "dpp";
  std::size_t k = 0, max_rows = fusemix::kDefaultKernelRowCap;
  std::uint64_t seed = 0;
};

void add_subset(CLI::App& app, SubsetArgs& a) {
  auto* c = app.add_subcommand("subset", "Select a diverse (k-DPP) or uniform subset of a store");
  c->add_option("--manifest", a.manifest, "Source store manifest")->required()->check(CLI::ExistingFile);
  c->add_option("--mode", a.mode, "dpp or uniform")->check(CLI::IsMember({"dpp", "uniform"}));
  c->add_option("--kernel", a.kernel, "DPP kernel: linear or poly2")->check(CLI::IsMember({"linear", "poly2"}));
  c->add_option("--k", a.k, "Subset size")->required()->check(CLI::PositiveNumber);
  c->add_option("--side", a.side, "Which latents feed the kernel: x or y")->check(CLI::IsMember({"x", "y"}));
  c->add_option("--seed", a.seed, "Seed for uniform mode");
  c->add_option("--max-rows", a.max_rows, "Refuse DPP kernels over this many rows")->check(CLI::PositiveNumber);
  c->add_option("--out", a.out, "Output store directory")->required();
}

void run_subset(const SubsetArgs& a) {
  std::ostringstream canon;
  canon << "subset mode=" << a.mode << " k=" << a.k;
  if (a.mode == "dpp") canon << " kernel=" << a.kernel << " side=" << a.side << " max_rows=" << a.max_rows;
  const fusemix::StoreHandle store = fusemix::StoreHandle::open(a.manifest);
  fusemix::require(a.k <= store.count(), "--k " + std::to_string(a.k) + " exceeds store count " +
                                             std::to_string(store.count()));
  json result = {{"command", "subset"}, {"mode", a.mode}, {"source_count", store.count()}};
  std::vector<std::size_t> indices;
  if (a.mode == "uniform") {
    indices = fusemix::uniform_subset(store.count(), a.k, a.seed);
  } else {
    const auto kind = fusemix::parse_kernel(a.kernel);
    const auto kernel = fusemix::build_kernel(a.side == "x" ? store.x() : store.y(), kind, a.max_rows);
    const auto sel = fusemix::greedy_kdpp(kernel, a.k);
    indices = sel.indices;
    result["kernel"] = a.kernel;
    result["side"] = a.side;
    result["log_det"] = sel.log_det();
    if (indices.size() < a.k)
      std::cerr << "warning: kernel rank reached after " << indices.size() << " of " << a.k << " picks\n";
  }
  const fs::path out(a.out);
  const auto m = fusemix::subset_store(store, indices, out);
  result["count"] = m.count;
  result["manifest"] = (out / fusemix::kManifestName).string();
  result["indices"] = indices;
  finish(result, repro(a.seed, fusemix::fnv1a64(canon.str())), out);
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string path;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  auto* c = app.add_subcommand("inspect", "Validate and describe a store manifest or a single latent file");
  c->add_option("path", a.path, "manifest.json or .fxls file")->required()->check(CLI::ExistingFile);
}

void run_inspect(const InspectArgs& a) {
  json result = {{"command", "inspect"}};
  if (fs::path(a.path).extension() == ".json") {
    const fusemix::StoreHandle store = fusemix::StoreHandle::open(a.path);
    result["kind"] = "store";
    result["count"] = store.count();
    result["dim_x"] = store.dim_x();
    result["dim_y"] = store.dim_y();
    result["tags"] = store.tags();
    result["checksum_x"] = fusemix::hex64(store.manifest().checksum_x);
    result["checksum_y"] = fusemix::hex64(store.manifest().checksum_y);
    result["grouped"] = !store.manifest().groups.empty();
    result["valid"] = true;
  } else {
    fusemix::LatentHeader h;
    fusemix::read_latent_file(a.path, &h);
    result["kind"] = "latent_file";
    result["version"] = h.version;
    result["count"] = h.count;
    result["dim"] = h.dim;
    result["tag"] = h.modality_tag;
    result["checksum"] = fusemix::hex64(fusemix::file_checksum(a.path));
    result["valid"] = true;
  }
  std::cout << result.dump(2) << "\n";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusemix: train lightweight adapters that align two frozen latent spaces"};
  app.set_version_flag("--version", FUSEMIX_VERSION);
  app.require_subcommand(1);
  SynthArgs synth;
  TrainArgs train;
  EvalArgs eval;
  SubsetArgs subset;
  InspectArgs inspect;
  add_synth(app, synth);
  add_train(app, train);
  add_eval(app, eval);
  add_subset(app, subset);
  add_inspect(app, inspect);

  try {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr)
      throw CLI::ExtrasError("unknown command '" + std::string(argv[1]) + "'", CLI::ExitCodes::ExtrasError);
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kUsageExit;
  }

  try {
    if (app.got_subcommand("synth")) run_synth(synth);
    else if (app.got_subcommand("train")) run_train(train);
    else if (app.got_subcommand("eval")) run_eval(eval);
    else if (app.got_subcommand("subset")) run_subset(subset);
    else if (app.got_subcommand("inspect")) run_inspect(inspect);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return kFailureExit;
  }
  return 0;
}
