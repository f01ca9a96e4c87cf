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

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fvq_tools/commands.h"
#include "fvq_tools/config.h"

namespace {

using fvq::tools::CommandOptions;

void add_common(CLI::App* sub, CommandOptions& o) {
  sub->add_option("-c,--config", o.config, "config file (key = value lines)")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override the seed key");
  sub->add_option("-o,--out", o.out_dir, "output directory (overrides out_dir)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fvq: vector quantization with a learned codebook projector"};
  app.require_subcommand(1);
  app.footer("\n" + fvq::tools::config_reference_plain());

  CommandOptions o;
  auto* toy = app.add_subcommand("toy", "2-D toy quantization runs");
  add_common(toy, o);
  toy->add_flag("--check", o.check, "assert the expected toy behaviour (exit 1 on failure)");

  auto* train = app.add_subcommand("train", "train an image model or run an experiment grid");
  add_common(train, o);
  train->add_flag("--check", o.check, "assert the experiment's expected outcome (exit 1 on failure)");
  train->add_flag("--resume", o.resume, "continue from <out>/checkpoint.fvq");
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate")->check(CLI::ExistingFile);
  eval->add_flag("--check", o.check, "exit 1 unless usage is 1.0");

  auto* exp = app.add_subcommand("export", "write the effective codebook of a checkpoint");
  add_common(exp, o);
  exp->add_option("--checkpoint", o.checkpoint, "checkpoint to export")->check(CLI::ExistingFile);

  auto* plot = app.add_subcommand("plot", "render a run CSV as SVG");
  add_common(plot, o);
  plot->add_option("-i,--input", o.input, "run_record.csv or trajectory.csv");
  plot->add_option("-k,--kind", o.kind, "usage, lr, loss or trajectory");

  app.add_subcommand("reference", "print the config key reference as markdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fvq::tools::kExitOk : fvq::tools::kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return fvq::tools::run_command(command, o, std::cout, std::cerr);
}
