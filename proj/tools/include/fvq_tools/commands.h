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

// fvq subcommands. Each returns a process exit code: 0 success, 1 a --check
// assertion failed, 2 usage, config or input error.

#ifndef FVQ_TOOLS_COMMANDS_H_
#define FVQ_TOOLS_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fvq/run_record.h"
#include "fvq_tools/config.h"

namespace fvq::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> input;  // plot
  std::optional<std::string> kind;             // plot
  bool check = false;
  bool resume = false;  // train: continue from <out>/checkpoint.fvq
};

// Dispatches `command` and maps exceptions to exit code 2 with a message on
// `err`. Reports go to `out`.
int run_command(const std::string& command, const CommandOptions& options, std::ostream& out, std::ostream& err);

int cmd_toy(const RunConfig& config, bool check, std::ostream& out);
int cmd_train(const RunConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_eval(const CommandOptions& options, std::ostream& out);
int cmd_export(const CommandOptions& options, std::ostream& out);
int cmd_plot(const RunConfig& config, const CommandOptions& options, std::ostream& out);

// Shared by --check and the acceptance harness.
struct UsageSummary {
  double final_usage = 0.0;
  double max_usage = 0.0;
  std::int64_t saturation_step = -1;  // first eval step from which usage stays 1
  bool saturated_by(double fraction, std::int64_t total_steps) const;
};
UsageSummary summarize_usage(const RunRecord& record);
double final_eval_mse(const RunRecord& record);

}  // namespace fvq::tools

#endif  // FVQ_TOOLS_COMMANDS_H_
