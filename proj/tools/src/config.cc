// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fvq_tools/config.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "fvq/tensor_io.h"

namespace fvq::tools {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

template <typename T>
T parse_integer(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& v) { return parse_integer<std::size_t>(v); }

double parse_real(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<ProjectorKind> parse_arms(const std::string& v) {
  std::vector<ProjectorKind> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_projector(part));
  return out;
}

std::string arms_string(const std::vector<ProjectorKind>& arms) {
  std::string out;
  for (std::size_t i = 0; i < arms.size(); ++i) out += (i ? "," : "") + projector_name(arms[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_size(part));
  return out;
}

std::string sizes_string(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<SizeDim> parse_size_dims(const std::string& v) {
  std::vector<SizeDim> out;
  for (const auto& part : split(v, ',')) {
    const auto kd = split(part, ':');
    if (kd.size() != 2) throw std::invalid_argument("expected K:d pairs, got '" + part + "'");
    out.push_back({parse_size(kd[0]), parse_size(kd[1])});
  }
  return out;
}

std::string size_dims_string(const std::vector<SizeDim>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + std::to_string(v[i].codebook_size) + ":" + std::to_string(v[i].dim);
  }
  return out;
}

ExperimentKind parse_kind(const std::string& v) {
  if (v == "single") return ExperimentKind::kSingle;
  if (v == "projector-comparison") return ExperimentKind::kProjectorComparison;
  if (v == "codebook-sweep") return ExperimentKind::kCodebookSweep;
  throw std::invalid_argument("expected single, projector-comparison or codebook-sweep, got '" + v + "'");
}

std::string kind_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kSingle: return "single";
    case ExperimentKind::kProjectorComparison: return "projector-comparison";
    case ExperimentKind::kCodebookSweep: return "codebook-sweep";
  }
  return "single";
}

AnnealingMode parse_annealing(const std::string& v) {
  if (v == "on") return AnnealingMode::kOn;
  if (v == "off") return AnnealingMode::kOff;
  if (v == "both") return AnnealingMode::kBoth;
  throw std::invalid_argument("expected on, off or both, got '" + v + "'");
}

std::string annealing_string(AnnealingMode m) {
  switch (m) {
    case AnnealingMode::kOn: return "on";
    case AnnealingMode::kOff: return "off";
    case AnnealingMode::kBoth: return "both";
  }
  return "on";
}

std::string schedule_preset_checked(const std::string& v) {
  if (v == "reconstruction" || v == "generation" || v == "constant" || v == "custom") return v;
  throw std::invalid_argument("expected reconstruction, generation, constant or custom, got '" + v + "'");
}

std::string bool_string(bool b) { return b ? "true" : "false"; }

struct KeySpec {
  const char* key;
  const char* type;
  const char* description;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FVQ_SIZE_KEY(NAME, FIELD, DOC)                                                    \
  KeySpec {                                                                               \
    NAME, "int", DOC, [](RunConfig& c, const std::string& v) { c.FIELD = parse_size(v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                        \
  }
#define FVQ_REAL_KEY(NAME, FIELD, DOC)                                                     \
  KeySpec {                                                                                \
    NAME, "real", DOC, [](RunConfig& c, const std::string& v) { c.FIELD = parse_real(v); }, \
        [](const RunConfig& c) { return format_double(c.FIELD); }                          \
  }
#define FVQ_BOOL_KEY(NAME, FIELD, DOC)                                                     \
  KeySpec {                                                                                \
    NAME, "bool", DOC, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(v); }, \
        [](const RunConfig& c) { return bool_string(c.FIELD); }                            \
  }
#define FVQ_PATH_KEY(NAME, FIELD, DOC)                                              \
  KeySpec {                                                                         \
    NAME, "path", DOC, [](RunConfig& c, const std::string& v) { c.FIELD = v; },      \
        [](const RunConfig& c) { return c.FIELD.string(); }                         \
  }

// Schedule fractions only apply to schedule.preset = custom.
const std::set<std::string> kCustomScheduleKeys = {
    "schedule.warmup_frac", "schedule.constant_frac", "schedule.decay_frac",
    "schedule.warmup_start_mult", "schedule.final_mult"};

// Keys are applied in table order, so schedule.preset lands before the
// fractions it would otherwise overwrite.
const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"seed", "int", "seed for every random stream (overridden by --seed)",
       [](RunConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      FVQ_PATH_KEY("out_dir", out_dir, "output directory (overridden by --out)"),
      FVQ_PATH_KEY("checkpoint", checkpoint, "checkpoint to evaluate, export, or resume training from"),

      FVQ_SIZE_KEY("model.image_size", train.model.image_size, "image height and width in pixels"),
      FVQ_SIZE_KEY("model.image_patch", train.model.image_patch, "encoder patch edge length"),
      FVQ_SIZE_KEY("model.channels", train.model.channels, "image channels"),
      FVQ_SIZE_KEY("model.d", train.model.dim, "vector channel d"),
      FVQ_SIZE_KEY("model.K", train.model.codebook_size, "codebook size K"),
      {"model.projector", "enum", "codebook projector: none, linear, mlp5 or bridge",
       [](RunConfig& c, const std::string& v) { c.train.model.projector = parse_projector(v); },
       [](const RunConfig& c) { return projector_name(c.train.model.projector); }},
      FVQ_SIZE_KEY("model.rq_depth", train.model.rq_depth, "residual quantization depth (1 = plain VQ)"),
      FVQ_REAL_KEY("model.beta", train.model.beta, "commitment weight on ||z_e - sg z_q||^2"),
      FVQ_REAL_KEY("model.recon_weight", train.model.recon_weight, "weight of the pixel MSE"),
      FVQ_SIZE_KEY("model.encoder_depth", train.model.encoder_depth, "encoder transformer blocks"),
      FVQ_SIZE_KEY("model.decoder_depth", train.model.decoder_depth, "decoder transformer blocks"),
      FVQ_SIZE_KEY("model.heads", train.model.heads, "attention heads in encoder/decoder (0 = auto)"),

      FVQ_SIZE_KEY("bridge.p", train.model.bridge.patch, "code vectors per bridge token"),
      FVQ_SIZE_KEY("bridge.d_latent", train.model.bridge.latent_dim, "bridge latent width d' (0 = d)"),
      FVQ_SIZE_KEY("bridge.depth", train.model.bridge.depth, "bridge transformer blocks N"),
      FVQ_SIZE_KEY("bridge.heads", train.model.bridge.heads, "bridge attention heads (0 = auto)"),
      FVQ_BOOL_KEY("bridge.pos_embed", train.model.bridge.use_pos_embed, "learned per-token position embedding"),

      {"schedule.preset", "enum", "reconstruction, generation, constant or custom",
       [](RunConfig& c, const std::string& v) { c.schedule_preset = schedule_preset_checked(v); },
       [](const RunConfig& c) { return c.schedule_preset; }},
      FVQ_REAL_KEY("schedule.base_lr", train.schedule.base_lr, "base learning rate before batch scaling"),
      {"schedule.total_steps", "int", "training steps",
       [](RunConfig& c, const std::string& v) { c.train.schedule.total_steps = parse_integer<std::int64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.train.schedule.total_steps); }},
      FVQ_REAL_KEY("schedule.warmup_frac", train.schedule.warmup_frac, "warmup share of steps (custom only)"),
      FVQ_REAL_KEY("schedule.constant_frac", train.schedule.constant_frac, "constant share of steps (custom only)"),
      FVQ_REAL_KEY("schedule.decay_frac", train.schedule.decay_frac, "decay share of steps (custom only)"),
      FVQ_REAL_KEY("schedule.warmup_start_mult", train.schedule.warmup_start_mult,
                   "multiplier at step 0 (custom only)"),
      FVQ_REAL_KEY("schedule.final_mult", train.schedule.final_mult, "multiplier at the last step (custom only)"),

      FVQ_SIZE_KEY("train.batch_size", train.batch_size, "images per step"),
      FVQ_SIZE_KEY("train.base_batch", base_batch, "batch the base lr refers to (0 = batch_size)"),
      FVQ_SIZE_KEY("train.eval_every", train.eval_every, "steps between evaluations (0 = steps/10)"),
      FVQ_SIZE_KEY("train.checkpoint_every", train.checkpoint_every, "steps between checkpoints (0 = end only)"),
      FVQ_SIZE_KEY("train.usage_window", train.usage_window, "steps in the rolling training-usage window"),
      {"train.stop_at", "int", "stop after this many steps (-1 = full budget)",
       [](RunConfig& c, const std::string& v) { c.stop_at = parse_integer<std::int64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.stop_at); }},
      FVQ_REAL_KEY("adam.beta1", train.adam.beta1, "Adam first-moment decay"),
      FVQ_REAL_KEY("adam.beta2", train.adam.beta2, "Adam second-moment decay"),
      FVQ_REAL_KEY("adam.epsilon", train.adam.epsilon, "Adam denominator epsilon"),

      {"data.source", "enum", "procedural or imgb",
       [](RunConfig& c, const std::string& v) {
         if (v != "procedural" && v != "imgb") throw std::invalid_argument("expected procedural or imgb");
         c.train.data.source = v;
       },
       [](const RunConfig& c) { return c.train.data.source; }},
      FVQ_PATH_KEY("data.dir", train.data.dir, "directory of .imgb files"),
      FVQ_SIZE_KEY("data.count", train.data.count, "procedural training images"),
      FVQ_SIZE_KEY("data.eval_count", train.data.eval_count, "procedural eval images (0 = K)"),

      {"experiment.kind", "enum", "single, projector-comparison or codebook-sweep",
       [](RunConfig& c, const std::string& v) { c.experiment.kind = parse_kind(v); },
       [](const RunConfig& c) { return kind_string(c.experiment.kind); }},
      {"experiment.arms", "list", "projector arms of the comparison",
       [](RunConfig& c, const std::string& v) { c.experiment.arms = parse_arms(v); },
       [](const RunConfig& c) { return arms_string(c.experiment.arms); }},
      {"experiment.sizes", "list", "K:d pairs of the comparison",
       [](RunConfig& c, const std::string& v) { c.experiment.sizes = parse_size_dims(v); },
       [](const RunConfig& c) { return size_dims_string(c.experiment.sizes); }},
      {"experiment.annealing", "enum", "on, off or both",
       [](RunConfig& c, const std::string& v) { c.experiment.annealing = parse_annealing(v); },
       [](const RunConfig& c) { return annealing_string(c.experiment.annealing); }},
      {"experiment.sweep", "list", "codebook sizes of the sweep (4^n apart)",
       [](RunConfig& c, const std::string& v) { c.experiment.sweep = parse_sizes(v); },
       [](const RunConfig& c) { return sizes_string(c.experiment.sweep); }},
      FVQ_SIZE_KEY("experiment.seeds", experiment.seeds, "number of consecutive seeds per arm"),

      {"toy.arms", "list", "projector arms to run",
       [](RunConfig& c, const std::string& v) { c.toy_arms = parse_arms(v); },
       [](const RunConfig& c) { return arms_string(c.toy_arms); }},
      FVQ_SIZE_KEY("toy.K", toy.codebook_size, "toy codebook size"),
      FVQ_SIZE_KEY("toy.points", toy.points, "learnable 2-D points"),
      {"toy.steps", "int", "SGD steps",
       [](RunConfig& c, const std::string& v) { c.toy.steps = parse_integer<std::int64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.toy.steps); }},
      FVQ_REAL_KEY("toy.eta", toy.eta, "SGD step size"),
      FVQ_REAL_KEY("toy.beta", toy.beta, "commitment weight"),
      {"toy.target", "pair", "target center x,y",
       [](RunConfig& c, const std::string& v) {
         const auto xy = split(v, ',');
         if (xy.size() != 2) throw std::invalid_argument("expected x,y");
         c.toy.target_x = parse_real(xy[0]);
         c.toy.target_y = parse_real(xy[1]);
       },
       [](const RunConfig& c) { return format_double(c.toy.target_x) + "," + format_double(c.toy.target_y); }},
      FVQ_REAL_KEY("toy.target_spread", toy.target_spread, "std of per-point targets around the center"),
      FVQ_REAL_KEY("toy.init_spread", toy.init_spread, "std of initial points around the origin"),
      FVQ_REAL_KEY("toy.code_std", toy.code_std, "std of initial base codes"),
      FVQ_SIZE_KEY("toy.probes", toy.probe_count, "usage probes (0 = 64 per code)"),
      FVQ_SIZE_KEY("toy.eval_every", toy.eval_every, "steps between usage evaluations"),
      FVQ_SIZE_KEY("toy.usage_window", toy.usage_window, "steps in the rolling usage window"),
      FVQ_SIZE_KEY("toy.bridge.p", toy.bridge.patch, "toy bridge patch size"),
      FVQ_SIZE_KEY("toy.bridge.d_latent", toy.bridge.latent_dim, "toy bridge latent width"),
      FVQ_SIZE_KEY("toy.bridge.depth", toy.bridge.depth, "toy bridge blocks"),
      FVQ_BOOL_KEY("toy.bridge.pos_embed", toy.bridge.use_pos_embed, "toy bridge position embedding"),

      FVQ_PATH_KEY("export.path", export_path, "materialized codebook output (empty = out_dir/codebook.fvq)"),
      FVQ_PATH_KEY("plot.input", plot_input, "CSV to plot"),
      {"plot.kind", "enum", "usage, lr, loss or trajectory",
       [](RunConfig& c, const std::string& v) {
         if (v != "usage" && v != "lr" && v != "loss" && v != "trajectory") {
           throw std::invalid_argument("expected usage, lr, loss or trajectory");
         }
         c.plot_kind = v;
       },
       [](const RunConfig& c) { return c.plot_kind; }},
  };
  return table;
}

#undef FVQ_SIZE_KEY
#undef FVQ_REAL_KEY
#undef FVQ_BOOL_KEY
#undef FVQ_PATH_KEY

const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table = {
      {"toy",
       "# Two-dimensional quantizer dynamics: plain codebook vs bridge.\n"
       "out_dir = runs/toy\n"
       "seed = 0\n"
       "toy.arms = none,bridge\n"
       "toy.K = 256\n"
       "toy.points = 256\n"
       "toy.steps = 500\n"
       "toy.eta = 0.05\n"
       "toy.target = 2,2\n"
       "toy.target_spread = 0.5\n"
       "toy.init_spread = 1\n"
       "toy.code_std = 1\n"
       "toy.bridge.p = 1\n"
       "toy.bridge.d_latent = 16\n"
       "toy.bridge.depth = 1\n"},
      {"reconstruction",
       "# Reconstruction recipe at 16x16: warmup(0.1), [constant(0.3)-linear(0.7)],\n"
       "# 0.005 -> 1 -> 0.01, Adam(0.9, 0.95), base lr 1e-4 at base batch 128.\n"
       "out_dir = runs/reconstruction\n"
       "seed = 0\n"
       "model.K = 1024\n"
       "model.d = 32\n"
       "model.projector = bridge\n"
       "bridge.p = 4\n"
       "bridge.depth = 2\n"
       "schedule.preset = reconstruction\n"
       "schedule.base_lr = 1e-4\n"
       "schedule.total_steps = 400\n"
       "train.batch_size = 128\n"
       "train.base_batch = 128\n"
       "train.eval_every = 40\n"
       "adam.beta1 = 0.9\n"
       "adam.beta2 = 0.95\n"
       "data.source = procedural\n"
       "data.count = 1024\n"},
      {"projector-comparison",
       "# Usage curves per projector arm at three (K, d); the bridge patch size\n"
       "# co-scales from p = 1 at K = 256.\n"
       "out_dir = runs/projector-comparison\n"
       "seed = 0\n"
       "experiment.kind = projector-comparison\n"
       "experiment.arms = bridge,linear,none\n"
       "experiment.sizes = 256:16,1024:32,4096:64\n"
       "experiment.annealing = on\n"
       "experiment.seeds = 5\n"
       "model.K = 256\n"
       "model.d = 16\n"
       "bridge.p = 1\n"
       "bridge.depth = 2\n"
       "schedule.preset = reconstruction\n"
       "schedule.base_lr = 3e-3\n"
       "schedule.total_steps = 300\n"
       "train.batch_size = 16\n"
       "data.count = 1024\n"},
      {"codebook-sweep",
       "# Commitment plateau vs codebook size for the bridge arm; p co-scales by 4^n.\n"
       "out_dir = runs/codebook-sweep\n"
       "seed = 0\n"
       "experiment.kind = codebook-sweep\n"
       "experiment.sweep = 64,256,1024\n"
       "model.K = 64\n"
       "model.d = 16\n"
       "model.projector = bridge\n"
       "bridge.p = 1\n"
       "bridge.depth = 2\n"
       "schedule.preset = reconstruction\n"
       "schedule.base_lr = 3e-3\n"
       "schedule.total_steps = 300\n"
       "train.batch_size = 16\n"
       "data.count = 1024\n"},
  };
  return table;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest form that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

TrainConfig default_train_config() {
  TrainConfig t;
  t.schedule.base_lr = 1e-3;
  t.schedule.total_steps = 300;
  t.batch_size = 16;
  return t;
}

void RunConfig::finalize() {
  train.seed = seed;
  toy.seed = seed;
  const double base_lr = train.schedule.base_lr;
  const std::int64_t steps = train.schedule.total_steps;
  const double lr = scaled_learning_rate(base_lr, train.batch_size, base_batch == 0 ? train.batch_size : base_batch);
  if (schedule_preset == "reconstruction") {
    train.schedule = ScheduleConfig::reconstruction(lr, steps);
  } else if (schedule_preset == "generation") {
    train.schedule = ScheduleConfig::generation(lr, steps);
  } else if (schedule_preset == "constant") {
    train.schedule = ScheduleConfig::constant(lr, steps);
  } else {
    train.schedule.base_lr = lr;
  }
  base_batch = train.batch_size;
  schedule_preset = "custom";
}

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<ConfigEntry> out;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line) + ": expected 'key = value', got '" + body + "'");
    }
    ConfigEntry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(origin + ":" + std::to_string(line) + ": empty key");
    if (auto it = seen.find(e.key); it != seen.end()) {
      throw ConfigError(origin + ":" + std::to_string(line) + ": key '" + e.key + "' repeats line " +
                        std::to_string(it->second));
    }
    seen[e.key] = line;
    out.push_back(std::move(e));
  }
  return out;
}

RunConfig apply_config(const std::vector<ConfigEntry>& entries, const std::string& origin, RunConfig base) {
  std::map<std::string, const ConfigEntry*> by_key;
  for (const auto& e : entries) {
    if (e.key == "preset") continue;
    bool known = false;
    for (const auto& spec : key_table()) known = known || e.key == spec.key;
    if (!known) {
      throw ConfigError(origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key +
                        "' (see `fvq reference` for the list)");
    }
    by_key[e.key] = &e;
  }
  for (const auto& spec : key_table()) {
    const auto it = by_key.find(spec.key);
    if (it == by_key.end()) continue;
    try {
      spec.set(base, it->second->value);
    } catch (const std::exception& ex) {
      throw ConfigError(origin + ":" + std::to_string(it->second->line) + ": " + spec.key + ": " + ex.what());
    }
  }
  for (const auto& key : kCustomScheduleKeys) {
    const auto it = by_key.find(key);
    if (it != by_key.end() && base.schedule_preset != "custom") {
      throw ConfigError(origin + ":" + std::to_string(it->second->line) + ": " + key +
                        " requires schedule.preset = custom");
    }
  }
  return base;
}

RunConfig load_config_text(const std::string& text, const std::string& origin) {
  const auto entries = parse_config_text(text, origin);
  RunConfig cfg;
  for (const auto& e : entries) {
    if (e.key != "preset") continue;
    if (!presets().count(e.value)) {
      throw ConfigError(origin + ":" + std::to_string(e.line) + ": unknown preset '" + e.value + "'");
    }
    const std::string name = "preset:" + e.value;
    cfg = apply_config(parse_config_text(preset_text(e.value), name), name, cfg);
  }
  cfg = apply_config(entries, origin, cfg);
  cfg.finalize();
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& ex) {
    throw ConfigError("cannot read config " + path.string() + ": " + ex.what());
  }
  return load_config_text(text, path.string());
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& spec : key_table()) out += std::string(spec.key) + " = " + spec.get(config) + "\n";
  return out;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : presets()) out.push_back(name);
  return out;
}

std::string preset_text(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

std::vector<KeyDoc> config_reference() {
  const RunConfig defaults;
  std::vector<KeyDoc> out;
  out.push_back({"preset", "enum", "", "start from a built-in preset"});
  for (const auto& spec : key_table()) {
    out.push_back({spec.key, spec.type, spec.get(defaults), spec.description});
  }
  return out;
}

std::string config_reference_markdown() {
  std::string out =
      "# fvq configuration keys\n\n"
      "Generated by `fvq reference`. Files hold one `key = value` per line; `#` starts a comment.\n"
      "Schedule fractions apply only with `schedule.preset = custom`. The learning rate used is\n"
      "`schedule.base_lr * train.batch_size / train.base_batch`.\n\n"
      "Presets: ";
  const auto names = preset_names();
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + std::string("`") + names[i] + "`";
  out += "\n\n| key | type | default | description |\n|---|---|---|---|\n";
  for (const auto& k : config_reference()) {
    out += "| `" + k.key + "` | " + k.type + " | `" + k.default_value + "` | " + k.description + " |\n";
  }
  return out;
}

std::string config_reference_plain() {
  std::string out = "Config keys (key = value; defaults in brackets):\n";
  for (const auto& k : config_reference()) {
    std::string left = "  " + k.key;
    if (left.size() < 30) left.resize(30, ' ');
    out += left + " " + k.description + (k.default_value.empty() ? "" : " [" + k.default_value + "]") + "\n";
  }
  return out;
}

}  // namespace fvq::tools
