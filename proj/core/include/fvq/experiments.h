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

#ifndef FVQ_EXPERIMENTS_H_
#define FVQ_EXPERIMENTS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fvq/bridge.h"
#include "fvq/models.h"
#include "fvq/run_record.h"
#include "fvq/trainer.h"

namespace fvq {

/// Two-dimensional quantizer dynamics.
///
/// M learnable points z_e, each with its own target t drawn around
/// (target_x, target_y), are quantized against the (projected) codebook.
/// Per point the objective is ||z_q - t||^2 + ||z_q - sg z_e||^2 +
/// beta ||z_e - sg z_q||^2. Each point takes a plain SGD step of size eta on
/// its own objective; the codebook and projector take an SGD step of size
/// eta on the mean over points.
struct ToyConfig {
  std::size_t codebook_size = 256;
  std::size_t points = 256;
  std::int64_t steps = 500;
  double eta = 0.05;
  double beta = kDefaultBeta;
  double target_x = 2.0;
  double target_y = 2.0;
  double target_spread = 0.5;  // targets ~ N(target, spread^2 I)
  double init_spread = 1.0;    // points start at N(0, init_spread^2 I)
  double code_std = 1.0;       // base codes ~ N(0, code_std^2 I)
  ProjectorKind projector = ProjectorKind::kNone;
  BridgeConfig bridge = default_bridge();
  std::size_t probe_count = 0;  // 0 means 64 probes per code
  std::size_t eval_every = 25;
  std::size_t usage_window = 100;
  std::uint64_t seed = 0;

  // Explicit initial states (row-major, 2 columns); empty means random.
  std::vector<double> codebook_init;
  std::vector<double> points_init;
  std::vector<double> targets_init;

  static BridgeConfig default_bridge();
  std::size_t resolved_probe_count() const { return probe_count > 0 ? probe_count : 64 * codebook_size; }
  void validate() const;
};

struct ToyResult {
  std::vector<TrajectoryPoint> trajectory;  // point 0, one entry per step plus the final state
  RunRecord record;
  double early_gap = 0.0;     // mean ||z_q - z_e|| over points and the first 25% of steps
  double straightness = 0.0;  // mean over points of net displacement / path length of z_e
  double final_usage = 0.0;   // usage of the final effective codebook on the probe set
  Tensor final_codebook;      // effective codebook after the last step
  Tensor final_points;
};

ToyResult run_toy(const ToyConfig& config);

// Builds one arm of the projector comparison from a base training config:
// the arm fixes K, d, projector and schedule; everything else is shared.
// The bridge patch size co-scales from (base K, base patch).
TrainConfig projector_arm_config(const TrainConfig& base, std::size_t codebook_size, std::size_t dim,
                                 ProjectorKind projector, bool annealing, std::uint64_t seed);

RunRecord run_projector_comparison(const TrainConfig& base, std::size_t codebook_size, std::size_t dim,
                                   ProjectorKind projector, bool annealing, std::uint64_t seed);

// Bridge patch size co-scales with K from (codebook_sizes[0], base patch).
std::vector<TrainConfig> codebook_sweep_configs(const TrainConfig& base,
                                                const std::vector<std::size_t>& codebook_sizes,
                                                ProjectorKind projector, std::uint64_t seed);
std::vector<RunRecord> run_codebook_size_sweep(const TrainConfig& base,
                                               const std::vector<std::size_t>& codebook_sizes,
                                               ProjectorKind projector, std::uint64_t seed);

// Mean commitment loss over the last `fraction` of training steps.
double commitment_plateau(const RunRecord& record, double fraction = 0.1);
// First evaluation step at which usage_eval reached 1 and stayed there; -1 if never.
std::int64_t usage_saturation_step(const RunRecord& record);

struct OneStepBehindReport {
  std::size_t triples = 0;
  double max_deviation = 0.0;           // SGD step vs (1 - eta) c + eta z_e
  double zero_eta_deviation = 0.0;      // same, restricted to eta = 0
  double max_identity_deviation = 0.0;  // corrected update vs commitment part - eta^2 dL/dz_e
  double max_ratio_error = 0.0;         // | |corr(eta)| / |corr(eta/2)| - 4 |
};

OneStepBehindReport check_one_step_behind(std::uint64_t seed, std::size_t triples = 100);

struct MarginReport {
  std::size_t trials = 0;
  std::size_t preserved = 0;  // trials whose index survived the encoder move
  std::size_t center_shift_violations = 0;
  double max_shift_ratio = 0.0;  // max ||z_q' - z_q|| / (delta_c + D_max)
  bool boundary_flip_found = false;
};

MarginReport check_margin_stability(std::size_t trials, std::uint64_t seed);

}  // namespace fvq

#endif  // FVQ_EXPERIMENTS_H_
