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

#include "fusemix/config.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace fusemix {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
    return v.substr(1, v.size() - 2);
  return v;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  require(ec == std::errc() && p == end && std::isfinite(out),
          "config: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  require(ec == std::errc() && p == end, "config: " + key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& key, const std::string& v) {
  require(v.size() >= 2 && v.front() == '[' && v.back() == ']', "config: " + key + " expects [a, b]");
  std::vector<std::string> items;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

void set_adapter(AdapterConfig& a, const std::string& field, const std::string& key, const std::string& v) {
  if (field == "input_dim") a.input_dim = to_uint(key, v);
  else if (field == "shared_dim") a.shared_dim = to_uint(key, v);
  else if (field == "depth") a.depth = to_uint(key, v);
  else if (field == "expansion_factor") a.expansion_factor = to_double(key, v);
  else if (field == "dropout") {
    a.dropout_p = to_double(key, v);
    require(a.dropout_p >= 0.0 && a.dropout_p < 1.0, "config: " + key + " must be in [0, 1)");
  }
  else if (field == "identity") a.identity = to_bool(key, v);
  else throw Error("config: unknown key '" + key + "'");
}

void emit_adapter(std::ostringstream& os, const char* section, const AdapterConfig& a) {
  os << "\n[" << section << "]\n"
     << "input_dim = " << a.input_dim << "\n"
     << "shared_dim = " << a.shared_dim << "\n"
     << "depth = " << a.depth << "\n"
     << "expansion_factor = " << fmt_double(a.expansion_factor) << "\n"
     << "dropout = " << fmt_double(a.dropout_p) << "\n"
     << "identity = " << (a.identity ? "true" : "false") << "\n";
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    // Strip comments that are not inside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out[key] = unquote(trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig TrainConfig::image_text() {
  TrainConfig c;
  c.batch_b = 20000;
  c.epochs = 500;
  c.adapter_x.depth = c.adapter_y.depth = 4;
  c.optim.lr = 1e-3;
  c.optim.weight_decay = 0.1;
  return c;
}

TrainConfig TrainConfig::audio_text() {
  TrainConfig c;
  c.batch_b = 2000;
  c.epochs = 50;
  c.adapter_x.depth = c.adapter_y.depth = 2;
  c.optim.lr = 1e-4;
  c.optim.weight_decay = 0.5;
  return c;
}

void TrainConfig::validate() const {
  require(batch_b >= 1, "train.batch_b must be positive");
  require(epochs >= 1, "train.epochs must be at least 1");
  adapter_x.validate();
  adapter_y.validate();
  const std::size_t sx = adapter_x.identity ? adapter_x.input_dim : adapter_x.shared_dim;
  const std::size_t sy = adapter_y.identity ? adapter_y.input_dim : adapter_y.shared_dim;
  require(sx == sy, "adapters map into different shared dimensions (" + std::to_string(sx) +
                        " vs " + std::to_string(sy) + ")");
  augment.validate();
  require(loss.init_logit_scale > 0.0 && loss.max_logit_scale > 0.0 &&
              loss.init_logit_scale <= loss.max_logit_scale,
          "loss: logit scales must satisfy 0 < init <= max");
  require(optim.lr > 0.0 && optim.weight_decay >= 0.0 && optim.eps > 0.0 &&
              optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0,
          "optim: invalid hyperparameters");
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = unquote(trim(raw));
  const auto dot = key.find('.');
  require(dot != std::string::npos, "config: unknown key '" + key + "'");
  const std::string sec = key.substr(0, dot), field = key.substr(dot + 1);
  if (sec == "train") {
    if (field == "batch_b") batch_b = to_uint(key, v);
    else if (field == "epochs") epochs = to_uint(key, v);
    else if (field == "seed") seed = to_uint(key, v);
    else if (field == "checkpoint_every") checkpoint_every = to_uint(key, v);
    else if (field == "eval_every") eval_every = to_uint(key, v);
    else if (field == "warmup_steps") {
      if (v == "epoch" || v.empty()) warmup_steps.reset();
      else warmup_steps = to_uint(key, v);
    } else if (field == "eval_manifest") eval_manifest = v;
    else if (field == "preset") {
      TrainConfig p = v == "image_text" ? image_text() : v == "audio_text" ? audio_text() : TrainConfig();
      require(v == "image_text" || v == "audio_text", "config: unknown preset '" + v + "'");
      p.seed = seed;
      p.adapter_x.input_dim = adapter_x.input_dim;
      p.adapter_y.input_dim = adapter_y.input_dim;
      *this = p;
    } else throw Error("config: unknown key '" + key + "'");
  } else if (sec == "adapter") {
    set_adapter(adapter_x, field, key, v);
    set_adapter(adapter_y, field, key, v);
  } else if (sec == "adapter_x") {
    set_adapter(adapter_x, field, key, v);
  } else if (sec == "adapter_y") {
    set_adapter(adapter_y, field, key, v);
  } else if (sec == "augment") {
    if (field == "scheme") augment.scheme = parse_mix_scheme(v);
    else if (field == "alpha") augment.alpha = to_double(key, v);
    else if (field == "sigma") augment.sigma = to_double(key, v);
    else if (field == "bins_lo") augment.bins_lo = static_cast<int>(to_uint(key, v));
    else if (field == "bins_hi") augment.bins_hi = static_cast<int>(to_uint(key, v));
    else throw Error("config: unknown key '" + key + "'");
  } else if (sec == "loss") {
    if (field == "init_logit_scale") loss.init_logit_scale = to_double(key, v);
    else if (field == "max_logit_scale") loss.max_logit_scale = to_double(key, v);
    else if (field == "learnable_t") loss.learnable_t = to_bool(key, v);
    else throw Error("config: unknown key '" + key + "'");
  } else if (sec == "optim") {
    if (field == "lr") optim.lr = to_double(key, v);
    else if (field == "weight_decay") optim.weight_decay = to_double(key, v);
    else if (field == "betas") {
      const auto items = to_list(key, v);
      require(items.size() == 2, "config: optim.betas expects two values");
      optim.beta1 = to_double(key, items[0]);
      optim.beta2 = to_double(key, items[1]);
    } else if (field == "eps") optim.eps = to_double(key, v);
    else if (field == "warmup_start_lr") optim.warmup_start_lr = to_double(key, v);
    else if (field == "final_lr") optim.final_lr = to_double(key, v);
    else throw Error("config: unknown key '" + key + "'");
  } else {
    throw Error("config: unknown key '" + key + "'");
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "[train]\n"
     << "batch_b = " << batch_b << "\n"
     << "epochs = " << epochs << "\n"
     << "seed = " << seed << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n"
     << "eval_every = " << eval_every << "\n"
     << "warmup_steps = " << (warmup_steps ? std::to_string(*warmup_steps) : std::string("\"epoch\"")) << "\n"
     << "eval_manifest = \"" << eval_manifest << "\"\n";
  emit_adapter(os, "adapter_x", adapter_x);
  emit_adapter(os, "adapter_y", adapter_y);
  os << "\n[augment]\n"
     << "scheme = \"" << to_string(augment.scheme) << "\"\n"
     << "alpha = " << fmt_double(augment.alpha) << "\n"
     << "sigma = " << fmt_double(augment.sigma) << "\n"
     << "bins_lo = " << augment.bins_lo << "\n"
     << "bins_hi = " << augment.bins_hi << "\n"
     << "\n[loss]\n"
     << "init_logit_scale = " << fmt_double(loss.init_logit_scale) << "\n"
     << "max_logit_scale = " << fmt_double(loss.max_logit_scale) << "\n"
     << "learnable_t = " << (loss.learnable_t ? "true" : "false") << "\n"
     << "\n[optim]\n"
     << "lr = " << fmt_double(optim.lr) << "\n"
     << "weight_decay = " << fmt_double(optim.weight_decay) << "\n"
     << "betas = [" << fmt_double(optim.beta1) << ", " << fmt_double(optim.beta2) << "]\n"
     << "eps = " << fmt_double(optim.eps) << "\n"
     << "warmup_start_lr = " << fmt_double(optim.warmup_start_lr) << "\n"
     << "final_lr = " << fmt_double(optim.final_lr) << "\n";
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) { return parse(text, TrainConfig()); }

TrainConfig TrainConfig::parse(const std::string& text, TrainConfig base) {
  const auto kv = parse_key_values(text);
  // Presets reset everything, so apply them before the other keys.
  if (auto it = kv.find("train.preset"); it != kv.end()) base.set(it->first, it->second);
  for (const auto& [k, v] : kv)
    if (k != "train.preset" && k.rfind("adapter.", 0) == 0) base.set(k, v);
  for (const auto& [k, v] : kv)
    if (k != "train.preset" && k.rfind("adapter.", 0) != 0) base.set(k, v);
  return base;
}

}  // namespace fusemix
