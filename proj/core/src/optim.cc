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

#include "fvq/optim.h"

#include <cmath>

namespace fvq {

ScheduleConfig ScheduleConfig::from_shares(double base_lr, std::int64_t total_steps,
                                           double warmup_frac, double constant_share,
                                           double decay_share, double warmup_start_mult,
                                           double final_mult) {
  ScheduleConfig c;
  c.base_lr = base_lr;
  c.total_steps = total_steps;
  c.warmup_frac = warmup_frac;
  c.constant_frac = (1.0 - warmup_frac) * constant_share;
  c.decay_frac = (1.0 - warmup_frac) * decay_share;
  c.warmup_start_mult = warmup_start_mult;
  c.final_mult = final_mult;
  return c;
}

ScheduleConfig ScheduleConfig::reconstruction(double base_lr, std::int64_t total_steps) {
  return from_shares(base_lr, total_steps, 0.1, 0.3, 0.7, 0.005, 0.01);
}

ScheduleConfig ScheduleConfig::generation(double base_lr, std::int64_t total_steps) {
  return from_shares(base_lr, total_steps, 0.0, 0.05, 0.95, 1.0, 0.01);
}

ScheduleConfig ScheduleConfig::constant(double base_lr, std::int64_t total_steps) {
  ScheduleConfig c;
  c.base_lr = base_lr;
  c.total_steps = total_steps;
  c.warmup_frac = 0.0;
  c.constant_frac = 1.0;
  c.decay_frac = 0.0;
  c.warmup_start_mult = 1.0;
  c.final_mult = 1.0;
  return c;
}

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw ConfigError("schedule: total_steps must be at least 1");
  if (warmup_frac < 0 || constant_frac < 0 || decay_frac < 0) {
    throw ConfigError("schedule: phase fractions must be non-negative");
  }
  if (std::abs(warmup_frac + constant_frac + decay_frac - 1.0) > 1e-9) {
    throw ConfigError("schedule: phase fractions must sum to 1");
  }
  if (!(final_mult > 0.0 && final_mult <= 1.0)) throw ConfigError("schedule: final_mult must be in (0, 1]");
  if (!(warmup_start_mult > 0.0)) throw ConfigError("schedule: warmup_start_mult must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("schedule: base_lr must be positive");
}

double lr_multiplier(const ScheduleConfig& cfg, std::int64_t step) {
  if (step < 0 || step > cfg.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
  }
  const double total = static_cast<double>(cfg.total_steps);
  const double s = static_cast<double>(step);
  const double warmup_end = cfg.warmup_frac * total;
  const double decay_start = (cfg.warmup_frac + cfg.constant_frac) * total;
  if (s < warmup_end) return std::lerp(cfg.warmup_start_mult, 1.0, s / warmup_end);
  if (s < decay_start || decay_start >= total) return 1.0;
  return std::lerp(1.0, cfg.final_mult, (s - decay_start) / (total - decay_start));
}

double lr_at(const ScheduleConfig& cfg, std::int64_t step) {
  return cfg.base_lr * lr_multiplier(cfg, step);
}

double scaled_learning_rate(double base_lr, std::size_t batch, std::size_t base_batch) {
  if (base_batch == 0) throw ConfigError("base batch size must be positive");
  return static_cast<double>(batch) / static_cast<double>(base_batch) * base_lr;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamOptions& o) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state size mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Sgd::step(double lr) {
  for (auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    sgd_step(p.tensor.mutable_values(), p.tensor.grad(), lr);
  }
}

Adam::Adam(ParameterList params, AdamOptions options)
    : Optimizer(std::move(params)), options_(options), states_(params_.size()) {}

void Adam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    // Parameters that never saw a gradient still advance with g = 0 so all
    // states share one step counter.
    if (!t.has_grad()) t.mutable_grad();
    adam_step(states_[i], t.mutable_values(), t.grad(), lr, options_);
  }
}

}  // namespace fvq
