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

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fvq/tensor_io.h"
#include "fvq_tools/commands.h"
#include "fvq_tools/config.h"
#include "fvq_tools/plot.h"

namespace fvq::tools {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fvq_tools_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_of(const std::string& text) {
  try {
    load_config_text(text, "t.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, ParsesCommentsAndWhitespace) {
  const auto entries = parse_config_text("# header\n\n  model.K = 64   # trailing\nseed=3\n", "t.cfg");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].key, "model.K");
  EXPECT_EQ(entries[0].value, "64");
  EXPECT_EQ(entries[0].line, 3u);
  EXPECT_EQ(entries[1].value, "3");
}

TEST(ConfigTest, ErrorsNameFileAndLine) {
  EXPECT_NE(error_of("seed = 1\nmodel.K 64\n").find("t.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("t.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("\nmodel.Q = 1\n").find("t.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("model.K = many\n").find("t.cfg:1"), std::string::npos);
  EXPECT_NE(error_of("model.projector = conv\n").find("t.cfg:1"), std::string::npos);
  EXPECT_NE(error_of("preset = nope\n"), "");
}

TEST(ConfigTest, ValuesLand) {
  const RunConfig c = load_config_text(
      "model.K = 64\nmodel.projector = bridge\nbridge.p = 4\nschedule.total_steps = 50\n"
      "experiment.sizes = 64:8,256:16\nexperiment.annealing = both\ntoy.target = 1,-1\n",
      "t.cfg");
  EXPECT_EQ(c.train.model.codebook_size, 64u);
  EXPECT_EQ(c.train.model.projector, ProjectorKind::kBridge);
  EXPECT_EQ(c.train.model.bridge.patch, 4u);
  EXPECT_EQ(c.train.steps(), 50);
  EXPECT_EQ(c.experiment.sizes, (std::vector<SizeDim>{{64, 8}, {256, 16}}));
  EXPECT_EQ(c.experiment.annealing, AnnealingMode::kBoth);
  EXPECT_EQ(c.toy.target_y, -1.0);
}

TEST(ConfigTest, BatchScalingAndSchedulePreset) {
  const RunConfig c = load_config_text(
      "schedule.base_lr = 1e-4\ntrain.batch_size = 32\ntrain.base_batch = 128\nschedule.total_steps = 100\n", "t.cfg");
  EXPECT_DOUBLE_EQ(c.train.schedule.base_lr, 2.5e-5);
  EXPECT_DOUBLE_EQ(lr_multiplier(c.train.schedule, 0), 0.005);
  const RunConfig flat = load_config_text("schedule.preset = constant\n", "t.cfg");
  EXPECT_EQ(lr_multiplier(flat.train.schedule, 0), 1.0);
}

TEST(ConfigTest, DumpRoundTrips) {
  for (const auto& name : preset_names()) {
    const RunConfig c = load_config_text(preset_text(name), name);
    EXPECT_EQ(dump_config(load_config_text(dump_config(c), "dump")), dump_config(c)) << name;
  }
}

TEST(ConfigTest, ShippedFilesMatchPresets) {
  const char* root = std::getenv("FVQ_SOURCE_DIR");
  if (root == nullptr) GTEST_SKIP() << "FVQ_SOURCE_DIR not set";
  const auto names = preset_names();
  EXPECT_EQ(names.size(), 4u);
  for (const auto& name : names) {
    const fs::path file = fs::path(root) / "configs" / (name + ".cfg");
    ASSERT_TRUE(fs::exists(file)) << file;
    const std::string text = read_file(file);
    EXPECT_NE(text.find(preset_text(name)), std::string::npos) << name;
    EXPECT_EQ(dump_config(load_config_file(file)), dump_config(load_config_text(preset_text(name), name)));
  }
}

TEST(ConfigTest, PresetKeyIsOverridable) {
  const RunConfig c = load_config_text("preset = codebook-sweep\nschedule.total_steps = 7\n", "t.cfg");
  EXPECT_EQ(c.experiment.kind, ExperimentKind::kCodebookSweep);
  EXPECT_EQ(c.train.steps(), 7);
}

TEST(ConfigTest, ReferenceListsEveryKey) {
  const std::string md = config_reference_markdown();
  const RunConfig defaults;
  std::istringstream dump(dump_config(defaults));
  std::string line;
  while (std::getline(dump, line)) {
    const std::string key = line.substr(0, line.find(' '));
    EXPECT_NE(md.find("`" + key + "`"), std::string::npos) << key;
  }
}

TEST(PlotTest, Charts) {
  RunRecord r;
  for (std::int64_t s = 0; s < 5; ++s) {
    RunRow row;
    row.step = s;
    row.lr = 0.1 * (s + 1);
    row.usage_eval = 0.2 * s;
    r.append(row);
  }
  const std::string svg = plot_run_record(r, "usage");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(plot_run_record(r, "lr").find("Learning rate"), std::string::npos);
  EXPECT_THROW(plot_run_record(r, "loss"), std::invalid_argument);
  EXPECT_THROW(plot_run_record(r, "fid"), std::invalid_argument);
  EXPECT_THROW(plot_trajectory({}), std::invalid_argument);
  const std::string traj = plot_trajectory({{0, 0, 0, 1, 1}, {1, 0.5, 0.5, 1, 1}});
  std::size_t lines = 0;
  for (std::size_t at = traj.find("<polyline"); at != std::string::npos; at = traj.find("<polyline", at + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
}

TEST(CommandsTest, UsageSummary) {
  RunRecord r;
  for (std::int64_t s : {10, 20, 30, 40}) {
    RunRow row;
    row.step = s;
    row.usage_eval = s >= 20 ? 1.0 : 0.7;
    r.append(row);
  }
  const UsageSummary u = summarize_usage(r);
  EXPECT_EQ(u.final_usage, 1.0);
  EXPECT_EQ(u.saturation_step, 20);
  EXPECT_TRUE(u.saturated_by(0.2, 100));
  EXPECT_FALSE(u.saturated_by(0.1, 100));
}

struct Captured {
  int code;
  std::string out, err;
};

Captured run(const std::string& cmd, const CommandOptions& o) {
  std::ostringstream out, err;
  const int code = run_command(cmd, o, out, err);
  return {code, out.str(), err.str()};
}

TEST(CommandsTest, ExitCodes) {
  const fs::path dir = scratch("exit");
  CommandOptions o;
  o.out_dir = dir;
  EXPECT_EQ(run("frobnicate", o).code, kExitUsage);

  o.checkpoint = dir / "missing.fvq";
  EXPECT_EQ(run("eval", o).code, kExitUsage);

  write_file_atomic(dir / "empty.csv", "");
  CommandOptions p;
  p.out_dir = dir;
  p.input = dir / "empty.csv";
  const Captured plot = run("plot", p);
  EXPECT_EQ(plot.code, kExitUsage);
  EXPECT_NE(plot.err.find("fvq plot: error"), std::string::npos) << plot.err;

  write_file_atomic(dir / "bad.cfg", "model.K = x\n");
  CommandOptions b;
  b.config = dir / "bad.cfg";
  EXPECT_EQ(run("train", b).code, kExitUsage);
  fs::remove_all(dir);
}

TEST(CommandsTest, TrainEvalExportPipeline) {
  const fs::path dir = scratch("pipeline");
  write_file_atomic(dir / "tiny.cfg",
                    "model.image_size = 8\nmodel.d = 8\nmodel.K = 16\nmodel.projector = bridge\n"
                    "bridge.p = 4\nbridge.depth = 1\nschedule.total_steps = 12\ntrain.batch_size = 4\n"
                    "data.count = 16\n");
  CommandOptions o;
  o.config = dir / "tiny.cfg";
  o.out_dir = dir / "run";
  const Captured train = run("train", o);
  ASSERT_EQ(train.code, kExitOk) << train.err;
  for (const char* f : {"run_record.csv", "checkpoint.fvq", "eval.json", "codebook.fvq", "codebook.fvq.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }

  CommandOptions e;
  e.checkpoint = dir / "run" / "checkpoint.fvq";
  e.out_dir = dir / "eval";
  const Captured eval = run("eval", e);
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  EXPECT_NE(eval.out.find("\"mse\""), std::string::npos);

  CommandOptions x = e;
  x.out_dir = dir / "export";
  ASSERT_EQ(run("export", x).code, kExitOk);
  EXPECT_EQ(read_file(dir / "export" / "codebook.fvq"), read_file(dir / "run" / "codebook.fvq"));

  CommandOptions p;
  p.input = dir / "run" / "run_record.csv";
  p.kind = "lr";
  p.out_dir = dir / "plots";
  ASSERT_EQ(run("plot", p).code, kExitOk);
  EXPECT_TRUE(fs::exists(dir / "plots" / "run_record-lr.svg"));

  // A flipped value byte must surface as a checksum failure, exit 2.
  std::string bytes = read_file(dir / "run" / "checkpoint.fvq");
  bytes[bytes.size() - 5] ^= 0x40;
  write_file_atomic(dir / "bad.fvq", bytes);
  e.checkpoint = dir / "bad.fvq";
  const Captured bad = run("eval", e);
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("checksum"), std::string::npos) << bad.err;
  fs::remove_all(dir);
}

}  // namespace
}  // namespace fvq::tools
