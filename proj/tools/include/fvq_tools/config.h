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

// Flat key = value run configuration.
//
//   # comment
//   model.K = 1024
//   bridge.p = 4        # trailing comments are allowed
//
// Keys are dotted and case-sensitive; each may appear once per file. A file
// may start from a built-in preset with `preset = NAME`; its own keys then
// override the preset's.

#ifndef FVQ_TOOLS_CONFIG_H_
#define FVQ_TOOLS_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fvq/experiments.h"
#include "fvq/trainer.h"

namespace fvq::tools {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct SizeDim {
  std::size_t codebook_size = 0;
  std::size_t dim = 0;
  bool operator==(const SizeDim&) const = default;
};

enum class ExperimentKind { kSingle, kProjectorComparison, kCodebookSweep };
enum class AnnealingMode { kOn, kOff, kBoth };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingle;
  std::vector<ProjectorKind> arms{ProjectorKind::kBridge, ProjectorKind::kLinear, ProjectorKind::kNone};
  std::vector<SizeDim> sizes{{256, 16}, {1024, 32}, {4096, 64}};
  AnnealingMode annealing = AnnealingMode::kOn;
  std::vector<std::size_t> sweep{64, 256, 1024};
  std::size_t seeds = 1;  // runs use seed, seed + 1, ...
};

// Desk-scale defaults: 300 steps of batch 16 at lr 1e-3.
TrainConfig default_train_config();

struct RunConfig {
  TrainConfig train = default_train_config();
  std::string schedule_preset = "reconstruction";  // reconstruction, generation, constant or custom
  std::size_t base_batch = 0;                       // 0 means train.batch_size (no lr scaling)
  std::int64_t stop_at = -1;                        // stop training early at this step
  ToyConfig toy;
  std::vector<ProjectorKind> toy_arms{ProjectorKind::kNone, ProjectorKind::kBridge};
  ExperimentConfig experiment;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path checkpoint;  // eval / export input, or train resume point
  std::filesystem::path export_path;
  std::filesystem::path plot_input;
  std::string plot_kind = "usage";

  // Applies seed, batch lr scaling and the schedule preset; call after all
  // keys are set. Leaves schedule_preset = custom, so a second call is a no-op.
  void finalize();
};

// Splits text into entries. Throws ConfigError("<origin>:<line>: ...") on
// malformed lines and repeated keys.
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin);

// Applies entries on top of `base`. Unknown keys and bad values throw
// ConfigError naming the origin and line.
RunConfig apply_config(const std::vector<ConfigEntry>& entries, const std::string& origin,
                       RunConfig base = {});

// Full pipeline: parse, expand `preset`, apply, finalize.
RunConfig load_config_text(const std::string& text, const std::string& origin);
RunConfig load_config_file(const std::filesystem::path& path);

// Every key with its current value; load_config_text(dump_config(c))
// reproduces a finalized `c`.
std::string dump_config(const RunConfig& config);

// Built-in presets; the shipped configs/*.cfg files carry the same text.
std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);

struct KeyDoc {
  std::string key;
  std::string type;
  std::string default_value;
  std::string description;
};
std::vector<KeyDoc> config_reference();
std::string config_reference_markdown();
std::string config_reference_plain();

std::string format_double(double v);

}  // namespace fvq::tools

#endif  // FVQ_TOOLS_CONFIG_H_
