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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fvq/experiments.h"

namespace fvq {
namespace {

RunRow eval_row(std::int64_t step, std::optional<double> usage, std::optional<double> commit = std::nullopt) {
  RunRow r;
  r.step = step;
  r.usage_eval = usage;
  r.loss_commit = commit;
  return r;
}

ToyConfig small_toy(ProjectorKind projector) {
  ToyConfig c;
  c.codebook_size = 64;
  c.points = 64;
  c.steps = 300;
  c.projector = projector;
  c.bridge.codebook_size = 64;
  c.bridge.patch = 4;
  c.seed = 1;
  return c;
}

TEST(ToyTest, BridgeClosesTheGapAndKeepsCodesAlive) {
  const ToyResult none = run_toy(small_toy(ProjectorKind::kNone));
  const ToyResult bridge = run_toy(small_toy(ProjectorKind::kBridge));
  EXPECT_LT(bridge.early_gap, none.early_gap);
  EXPECT_GT(bridge.final_usage, none.final_usage);
  EXPECT_EQ(none.trajectory.size(), 301u);
  EXPECT_EQ(none.final_codebook.shape(), (Shape{64, 2}));
  EXPECT_GT(none.straightness, 0.0);
  EXPECT_LE(none.straightness, 1.0 + 1e-12);
}

TEST(ToyTest, Deterministic) {
  const ToyResult a = run_toy(small_toy(ProjectorKind::kLinear));
  const ToyResult b = run_toy(small_toy(ProjectorKind::kLinear));
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.record, b.record);
}

TEST(ToyTest, ExplicitInitialState) {
  ToyConfig c = small_toy(ProjectorKind::kNone);
  c.codebook_size = 2;
  c.points = 1;
  c.steps = 1;
  c.probe_count = 8;
  c.codebook_init = {0, 0, 10, 10};
  c.points_init = {1, 1};
  c.targets_init = {1, 1};
  const ToyResult r = run_toy(c);
  EXPECT_EQ(r.trajectory.front().ze_x, 1.0);
  EXPECT_EQ(r.trajectory.front().zq_x, 0.0);
  c.points_init = {1};
  EXPECT_THROW(run_toy(c), ConfigError);
}

TEST(ExperimentsTest, OneStepBehindHarness) {
  const OneStepBehindReport r = check_one_step_behind(7, 100);
  EXPECT_EQ(r.triples, 100u);
  EXPECT_LT(r.max_deviation, 1e-12);
  EXPECT_LT(r.zero_eta_deviation, 1e-12);
  EXPECT_LT(r.max_identity_deviation, 1e-12);
  EXPECT_LT(r.max_ratio_error, 1e-9);
}

TEST(ExperimentsTest, MarginHarness) {
  const MarginReport r = check_margin_stability(1000, 3);
  EXPECT_EQ(r.trials, 1000u);
  EXPECT_EQ(r.preserved, 1000u);
  EXPECT_EQ(r.center_shift_violations, 0u);
  EXPECT_LE(r.max_shift_ratio, 1.0);
  EXPECT_TRUE(r.boundary_flip_found);
}

TEST(ExperimentsTest, UsageSaturationStep) {
  RunRecord r;
  r.append(eval_row(10, 0.5));
  r.append(eval_row(20, 1.0));
  r.append(eval_row(25, std::nullopt));
  r.append(eval_row(30, 0.9));
  r.append(eval_row(40, 1.0));
  r.append(eval_row(50, 1.0));
  EXPECT_EQ(usage_saturation_step(r), 40);
  r.append(eval_row(60, 0.99));
  EXPECT_EQ(usage_saturation_step(r), -1);
}

TEST(ExperimentsTest, CommitmentPlateau) {
  RunRecord r;
  for (std::int64_t s = 0; s <= 100; ++s) r.append(eval_row(s, std::nullopt, s >= 90 ? 2.0 : 100.0));
  EXPECT_EQ(commitment_plateau(r, 0.1), 2.0);
  EXPECT_THROW(commitment_plateau(RunRecord()), std::invalid_argument);
}

TrainConfig base_config() {
  TrainConfig c;
  c.model.codebook_size = 64;
  c.model.dim = 8;
  c.model.image_size = 8;
  c.model.bridge.patch = 1;
  c.model.bridge.depth = 1;
  c.schedule = ScheduleConfig::reconstruction(1e-3, 10);
  c.batch_size = 2;
  c.data.count = 8;
  return c;
}

TEST(ExperimentsTest, ArmConfigSharesEverythingButTheArm) {
  const TrainConfig base = base_config();
  const TrainConfig a = projector_arm_config(base, 1024, 32, ProjectorKind::kBridge, true, 5);
  EXPECT_EQ(a.model.codebook_size, 1024u);
  EXPECT_EQ(a.model.dim, 32u);
  EXPECT_EQ(a.model.bridge.patch, 16u);
  EXPECT_EQ(a.seed, 5u);
  EXPECT_EQ(lr_multiplier(a.schedule, 0), 0.005);
  const TrainConfig flat = projector_arm_config(base, 256, 16, ProjectorKind::kLinear, false, 5);
  EXPECT_EQ(lr_multiplier(flat.schedule, 0), 1.0);
  EXPECT_EQ(flat.batch_size, base.batch_size);
  EXPECT_THROW(projector_arm_config(base, 128, 8, ProjectorKind::kBridge, true, 0), ConfigError);
}

TEST(ExperimentsTest, SweepCoScalesPatch) {
  const auto cfgs = codebook_sweep_configs(base_config(), {64, 256, 1024}, ProjectorKind::kBridge, 2);
  ASSERT_EQ(cfgs.size(), 3u);
  EXPECT_EQ(cfgs[0].model.bridge.patch, 1u);
  EXPECT_EQ(cfgs[1].model.bridge.patch, 4u);
  EXPECT_EQ(cfgs[2].model.bridge.patch, 16u);
  for (const auto& c : cfgs) EXPECT_EQ(c.model.codebook_size / c.model.bridge.patch, 64u);
  EXPECT_THROW(codebook_sweep_configs(base_config(), {}, ProjectorKind::kBridge, 2), ConfigError);
}

TEST(ExperimentsTest, ComparisonRunMatchesTrainer) {
  const RunRecord a = run_projector_comparison(base_config(), 64, 8, ProjectorKind::kBridge, true, 1);
  Trainer t(projector_arm_config(base_config(), 64, 8, ProjectorKind::kBridge, true, 1));
  t.run();
  EXPECT_EQ(a, t.record());
}

}  // namespace
}  // namespace fvq
