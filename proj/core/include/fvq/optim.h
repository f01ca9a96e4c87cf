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

#ifndef FVQ_OPTIM_H_
#define FVQ_OPTIM_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fvq/nn.h"

namespace fvq {

/// Warmup -> constant -> linear-decay learning-rate law.
///
/// Phase boundaries sit at W = warmup_frac*T and C = (warmup_frac +
/// constant_frac)*T. The multiplier rises linearly from warmup_start_mult to
/// 1 on [0, W), holds 1 on [W, C) and falls linearly to final_mult on [C, T].
/// Interpolation is per step.
struct ScheduleConfig {
  double base_lr = 1e-4;
  std::int64_t total_steps = 1;
  double warmup_frac = 0.1;
  double constant_frac = 0.27;
  double decay_frac = 0.63;
  double warmup_start_mult = 0.005;
  double final_mult = 0.01;

  // Reconstruction recipe: warmup(0.1) then [constant(0.3) - linear(0.7)] of
  // the remainder, 0.005 -> 1 -> 0.01.
  static ScheduleConfig reconstruction(double base_lr, std::int64_t total_steps);
  // Generation recipe: no warmup, [constant(0.05) - linear(0.95)], 1 -> 0.01.
  static ScheduleConfig generation(double base_lr, std::int64_t total_steps);
  // Flat base_lr for the whole run (no annealing).
  static ScheduleConfig constant(double base_lr, std::int64_t total_steps);

  // Splits the post-warmup remainder into constant/decay shares.
  static ScheduleConfig from_shares(double base_lr, std::int64_t total_steps, double warmup_frac,
                                    double constant_share, double decay_share,
                                    double warmup_start_mult, double final_mult);

  void validate() const;
};

double lr_multiplier(const ScheduleConfig& cfg, std::int64_t step);
double lr_at(const ScheduleConfig& cfg, std::int64_t step);

// Linear scaling: (batch / base_batch) * base_lr.
double scaled_learning_rate(double base_lr, std::size_t batch, std::size_t base_batch);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update of a single parameter buffer.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamOptions& options = {});

// p <- p - lr * g
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

class Optimizer {
 public:
  explicit Optimizer(ParameterList params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  virtual void step(double lr) = 0;
  void zero_grad();
  const ParameterList& parameters() const { return params_; }

 protected:
  ParameterList params_;
};

class Sgd : public Optimizer {
 public:
  using Optimizer::Optimizer;
  void step(double lr) override;
};

class Adam : public Optimizer {
 public:
  Adam(ParameterList params, AdamOptions options = {});
  void step(double lr) override;

  const AdamOptions& options() const { return options_; }
  std::vector<AdamState>& states() { return states_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  AdamOptions options_;
  std::vector<AdamState> states_;
};

}  // namespace fvq

#endif  // FVQ_OPTIM_H_
