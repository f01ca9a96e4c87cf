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
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "fvq/optim.h"
#include "fvq/random.h"

namespace fvq {
namespace {

// Plain scalar Adam, written out independently of adam_step.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double p, double g, double lr, double b1 = 0.9, double b2 = 0.95, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mh = m / (1.0 - std::pow(b1, t)), vh = v / (1.0 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(ScheduleTest, ReconstructionEndpoints) {
  const auto cfg = ScheduleConfig::reconstruction(2e-4, 1000);
  EXPECT_DOUBLE_EQ(lr_multiplier(cfg, 0), 0.005);
  EXPECT_DOUBLE_EQ(lr_multiplier(cfg, 100), 1.0);
  EXPECT_DOUBLE_EQ(lr_multiplier(cfg, 1000), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 0.005 * 2e-4);
  EXPECT_DOUBLE_EQ(lr_at(cfg, 1000), 0.01 * 2e-4);
  EXPECT_THROW(lr_at(cfg, -1), std::out_of_range);
  EXPECT_THROW(lr_at(cfg, 1001), std::out_of_range);
}

TEST(ScheduleTest, FortyEpochsWarmUpForFour) {
  const auto cfg = ScheduleConfig::reconstruction(1.0, 40);
  EXPECT_LT(lr_multiplier(cfg, 3), 1.0);
  EXPECT_EQ(lr_multiplier(cfg, 4), 1.0);
}

TEST(ScheduleTest, PhaseFractions) {
  const auto cfg = ScheduleConfig::reconstruction(1.0, 1000);
  EXPECT_DOUBLE_EQ(cfg.warmup_frac, 0.1);
  EXPECT_NEAR(cfg.constant_frac, 0.27, 1e-15);
  EXPECT_NEAR(cfg.decay_frac, 0.63, 1e-15);
  // Constant phase [100, 370], then decay.
  EXPECT_EQ(lr_multiplier(cfg, 370), 1.0);
  EXPECT_LT(lr_multiplier(cfg, 371), 1.0);
}

TEST(ScheduleTest, MaximumIsExactlyBase) {
  const auto cfg = ScheduleConfig::reconstruction(3e-4, 777);
  double hi = 0.0;
  for (std::int64_t s = 0; s <= 777; ++s) hi = std::max(hi, lr_at(cfg, s));
  EXPECT_EQ(hi, 3e-4);
}

TEST(ScheduleTest, ContinuousAndPiecewiseLinear) {
  const auto cfg = ScheduleConfig::reconstruction(1.0, 100000);
  const double w = 10000, c = 37000;
  for (double edge : {w, c}) {
    const auto e = static_cast<std::int64_t>(edge);
    const double left = lr_multiplier(cfg, e - 1) + (lr_multiplier(cfg, e - 1) - lr_multiplier(cfg, e - 2));
    EXPECT_NEAR(left, lr_multiplier(cfg, e), 1e-12 * lr_multiplier(cfg, e));
  }
  // Equal steps inside a phase give equal increments.
  for (std::int64_t s : {100, 5000, 20000, 50000, 90000}) {
    const double d1 = lr_multiplier(cfg, s + 1) - lr_multiplier(cfg, s);
    const double d2 = lr_multiplier(cfg, s + 2) - lr_multiplier(cfg, s + 1);
    EXPECT_NEAR(d1, d2, 1e-14);
  }
}

TEST(ScheduleTest, GenerationAndConstantPresets) {
  const auto gen = ScheduleConfig::generation(1.0, 1000);
  EXPECT_EQ(lr_multiplier(gen, 0), 1.0);
  EXPECT_EQ(lr_multiplier(gen, 50), 1.0);
  EXPECT_DOUBLE_EQ(lr_multiplier(gen, 1000), 0.01);
  const auto flat = ScheduleConfig::constant(0.5, 10);
  for (std::int64_t s = 0; s <= 10; ++s) EXPECT_EQ(lr_at(flat, s), 0.5);
}

TEST(ScheduleTest, Validation) {
  ScheduleConfig cfg = ScheduleConfig::reconstruction(1.0, 100);
  cfg.decay_frac = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ScheduleConfig::reconstruction(1.0, 100);
  cfg.final_mult = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ScheduleConfig::reconstruction(1.0, 100);
  cfg.warmup_start_mult = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ScheduleConfig::reconstruction(1.0, 0);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ScheduleTest, LinearScalingRule) {
  EXPECT_DOUBLE_EQ(scaled_learning_rate(1e-4, 512, 256), 2e-4);
  EXPECT_DOUBLE_EQ(scaled_learning_rate(1e-4, 64, 256), 2.5e-5);
  EXPECT_THROW(scaled_learning_rate(1e-4, 64, 0), ConfigError);
}

TEST(AdamTest, ScalarOracleOneStep) {
  std::vector<double> p{1.0};
  const std::vector<double> g{1.0};
  AdamState st;
  adam_step(st, p, g, 0.1);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_EQ(st.t, 1);
}

TEST(AdamTest, MatchesScalarOracleOverManySteps) {
  Rng rng(1);
  std::vector<double> p(5), g(5);
  for (double& v : p) v = rng.normal();
  std::vector<ScalarAdam> oracle(5);
  std::vector<double> q = p;
  AdamState st;
  for (int step = 0; step < 50; ++step) {
    for (double& v : g) v = rng.normal();
    adam_step(st, p, g, 1e-2);
    for (std::size_t i = 0; i < 5; ++i) q[i] = oracle[i].step(q[i], g[i], 1e-2);
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[i], q[i], 1e-13);
}

TEST(AdamTest, ZeroGradientIsNoOp) {
  std::vector<double> p{0.3, -2.0, 5.0};
  const std::vector<double> before = p, g(3, 0.0);
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(st, p, g, 0.1);
  EXPECT_EQ(p, before);
}

TEST(AdamTest, ShapeMismatch) {
  std::vector<double> p(3);
  const std::vector<double> g(2);
  AdamState st;
  EXPECT_THROW(adam_step(st, p, g, 0.1), ShapeError);
}

TEST(AdamTest, OptimizerIsDeterministic) {
  auto run = [] {
    Rng rng(2);
    Tensor w = rng.normal_tensor({4, 3}, 1.0, true);
    Adam opt({{"w", w}});
    for (int i = 0; i < 10; ++i) {
      reset_record();
      opt.zero_grad();
      backward(sum(square(w)));
      opt.step(1e-2);
    }
    reset_record();
    return std::vector<double>(w.values().begin(), w.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(SgdTest, Examples) {
  std::vector<double> p{1.0, 0.0};
  sgd_step(p, std::vector<double>{1.0, -1.0}, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  EXPECT_DOUBLE_EQ(p[1], 0.1);
  const std::vector<double> before = p;
  sgd_step(p, std::vector<double>{7.0, 3.0}, 0.0);
  EXPECT_EQ(p, before);
  EXPECT_THROW(sgd_step(p, std::vector<double>{1.0}, 0.1), ShapeError);
}

}  // namespace
}  // namespace fvq
