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

#include "fvq/experiments.h"

#include <algorithm>
#include <cmath>

#include "fvq/optim.h"
#include "fvq/quantizer.h"
#include "fvq/random.h"

namespace fvq {
namespace {

constexpr std::size_t kToyDim = 2;

enum ToyStream : std::uint64_t {
  kToyCodes = 0x70C1,
  kToyPoints = 0x70C2,
  kToyTargets = 0x70C3,
  kToyProbes = 0x70C4,
  kToyProjector = 0x70C5,
};

Tensor gaussian_cloud(Rng& rng, std::size_t n, double cx, double cy, double spread) {
  Tensor t = Tensor::zeros({n, kToyDim});
  auto v = t.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    v[i * 2] = cx + spread * rng.normal();
    v[i * 2 + 1] = cy + spread * rng.normal();
  }
  return t;
}

Tensor from_init(const std::vector<double>& init, std::size_t rows, const char* what) {
  if (init.size() != rows * kToyDim) {
    throw ConfigError(std::string("toy: ") + what + " needs " + std::to_string(rows * kToyDim) +
                      " values, got " + std::to_string(init.size()));
  }
  return Tensor::from({rows, kToyDim}, init);
}

double mean_row_distance(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  double total = 0.0;
  const std::size_t rows = a.size() / dim;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = a[r * dim + j] - b[r * dim + j];
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(rows);
}

double probe_usage(const Tensor& probes, const Tensor& codebook) {
  UsageStats stats(codebook.dim(0));
  stats.record(nearest_indices(probes, codebook));
  return stats.usage();
}

}  // namespace

BridgeConfig ToyConfig::default_bridge() {
  BridgeConfig b;
  // p = 1 keeps every code on the shared expand map; with p > 1 a whole
  // in-group position can be stranded once it loses all assignments.
  b.patch = 1;
  b.latent_dim = 16;
  b.depth = 1;
  return b;
}

void ToyConfig::validate() const {
  if (codebook_size == 0 || points == 0) throw ConfigError("toy: codebook_size and points must be positive");
  if (steps < 1) throw ConfigError("toy: steps must be at least 1");
  if (!(eta >= 0.0)) throw ConfigError("toy: eta must be non-negative");
  if (beta < 0.0) throw ConfigError("toy: beta must be non-negative");
  if (eval_every == 0 || usage_window == 0) throw ConfigError("toy: eval_every and usage_window must be positive");
  if (projector == ProjectorKind::kBridge) {
    BridgeConfig b = bridge;
    b.codebook_size = codebook_size;
    b.dim = kToyDim;
    b.validate();
  }
}

ToyResult run_toy(const ToyConfig& cfg) {
  cfg.validate();
  const std::size_t K = cfg.codebook_size, M = cfg.points;

  Rng code_rng(derive_seed(cfg.seed, kToyCodes));
  Tensor base = cfg.codebook_init.empty() ? gaussian_cloud(code_rng, K, 0.0, 0.0, cfg.code_std)
                                          : from_init(cfg.codebook_init, K, "codebook_init");
  base.set_requires_grad(true);
  Rng point_rng(derive_seed(cfg.seed, kToyPoints));
  Tensor points = cfg.points_init.empty() ? gaussian_cloud(point_rng, M, 0.0, 0.0, cfg.init_spread)
                                          : from_init(cfg.points_init, M, "points_init");
  points.set_requires_grad(true);
  Rng target_rng(derive_seed(cfg.seed, kToyTargets));
  const Tensor targets = cfg.targets_init.empty()
                             ? gaussian_cloud(target_rng, M, cfg.target_x, cfg.target_y, cfg.target_spread)
                             : from_init(cfg.targets_init, M, "targets_init");
  Rng probe_rng(derive_seed(cfg.seed, kToyProbes));
  const Tensor probes =
      gaussian_cloud(probe_rng, cfg.resolved_probe_count(), cfg.target_x, cfg.target_y, cfg.target_spread);

  BridgeConfig bcfg = cfg.bridge;
  bcfg.codebook_size = K;
  bcfg.dim = kToyDim;
  Rng proj_rng(derive_seed(cfg.seed, kToyProjector));
  const CodebookProjector projector(cfg.projector, bcfg, proj_rng);

  ParameterList shared{{"codebook.base", base}};
  projector.collect(shared);
  Sgd shared_opt(shared);

  ToyResult result;
  UsageWindow window(K, cfg.usage_window);
  const std::vector<double> start(points.values().begin(), points.values().end());
  std::vector<double> path(M, 0.0);
  const std::int64_t early_end = std::max<std::int64_t>(1, cfg.steps / 4);
  double early_sum = 0.0;

  auto evaluate = [&](RunRow& row) {
    NoGradGuard guard;
    const Tensor eff = projector.materialize(base);
    row.usage_eval = probe_usage(probes, eff);
    row.set_distance = set_distance(detach(points), eff);
  };

  for (std::int64_t s = 0; s < cfg.steps; ++s) {
    RunRow row;
    row.step = s;
    row.lr = cfg.eta;
    if (s % static_cast<std::int64_t>(cfg.eval_every) == 0) evaluate(row);

    shared_opt.zero_grad();
    points.zero_grad();
    reset_record();
    const Tensor eff = projector.forward(base);
    const QuantizeResult q = quantize_ste(points, eff);
    const Tensor task = scale(sum(square(sub(q.z_q, targets))), 1.0 / static_cast<double>(M));
    const Tensor commit = scale(commitment_loss(points, q.selected, cfg.beta), static_cast<double>(kToyDim));
    backward(add(task, commit));

    const auto zv = points.values(), qv = q.selected.values();
    result.trajectory.push_back({s, zv[0], zv[1], qv[0], qv[1]});
    if (s < early_end) early_sum += mean_row_distance(zv, qv, kToyDim);

    std::vector<double> before(zv.begin(), zv.end());
    // Per-point objective: undo the 1/M of the batch mean.
    std::vector<double> point_grad(points.grad().begin(), points.grad().end());
    for (double& g : point_grad) g *= static_cast<double>(M);
    sgd_step(points.mutable_values(), point_grad, cfg.eta);
    shared_opt.step(cfg.eta);
    reset_record();

    const auto after = points.values();
    for (std::size_t m = 0; m < M; ++m) {
      path[m] += std::hypot(after[m * 2] - before[m * 2], after[m * 2 + 1] - before[m * 2 + 1]);
    }
    window.push(q.indices);
    row.loss_rec = task.item();
    row.loss_commit = commit.item();
    row.usage_window = window.usage();
    row.ste_error_norm = mean_row_distance(before, qv, kToyDim);
    result.record.append(row);
  }

  {
    RunRow row;
    row.step = cfg.steps;
    row.lr = cfg.eta;
    evaluate(row);
    result.record.append(row);
    result.final_usage = *row.usage_eval;
    NoGradGuard guard;
    const Tensor eff = projector.materialize(base);
    const auto idx = nearest_indices(points, eff);
    const auto zv = points.values();
    const std::size_t c = static_cast<std::size_t>(idx[0]) * kToyDim;
    result.trajectory.push_back({cfg.steps, zv[0], zv[1], eff.values()[c], eff.values()[c + 1]});
    result.final_codebook = eff;
    result.final_points = points.clone();
  }

  result.early_gap = early_sum / static_cast<double>(std::min(early_end, cfg.steps));
  const auto end = points.values();
  double straight = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double net = std::hypot(end[m * 2] - start[m * 2], end[m * 2 + 1] - start[m * 2 + 1]);
    straight += path[m] > 0.0 ? net / path[m] : 1.0;
  }
  result.straightness = straight / static_cast<double>(M);
  return result;
}

TrainConfig projector_arm_config(const TrainConfig& base, std::size_t codebook_size, std::size_t dim,
                                 ProjectorKind projector, bool annealing, std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.model.codebook_size = codebook_size;
  cfg.model.dim = dim;
  cfg.model.projector = projector;
  if (projector == ProjectorKind::kBridge) {
    cfg.model.bridge.patch = scale_patch_size(base.model.codebook_size, codebook_size, base.model.bridge.patch);
  }
  cfg.seed = seed;
  const ScheduleConfig& s = base.schedule;
  cfg.schedule = annealing ? ScheduleConfig::reconstruction(s.base_lr, s.total_steps)
                           : ScheduleConfig::constant(s.base_lr, s.total_steps);
  cfg.validate();
  return cfg;
}

RunRecord run_projector_comparison(const TrainConfig& base, std::size_t codebook_size, std::size_t dim,
                                   ProjectorKind projector, bool annealing, std::uint64_t seed) {
  Trainer trainer(projector_arm_config(base, codebook_size, dim, projector, annealing, seed));
  trainer.run();
  return trainer.record();
}

std::vector<TrainConfig> codebook_sweep_configs(const TrainConfig& base,
                                                const std::vector<std::size_t>& codebook_sizes,
                                                ProjectorKind projector, std::uint64_t seed) {
  if (codebook_sizes.empty()) throw ConfigError("sweep: empty codebook size list");
  std::vector<TrainConfig> out;
  const std::size_t k0 = codebook_sizes.front();
  const std::size_t p0 = base.model.bridge.patch;
  for (std::size_t k : codebook_sizes) {
    TrainConfig cfg = base;
    cfg.model.codebook_size = k;
    cfg.model.projector = projector;
    cfg.model.bridge.patch = scale_patch_size(k0, k, p0);
    cfg.seed = seed;
    cfg.validate();
    out.push_back(cfg);
  }
  return out;
}

std::vector<RunRecord> run_codebook_size_sweep(const TrainConfig& base,
                                               const std::vector<std::size_t>& codebook_sizes,
                                               ProjectorKind projector, std::uint64_t seed) {
  std::vector<RunRecord> out;
  for (const auto& cfg : codebook_sweep_configs(base, codebook_sizes, projector, seed)) {
    Trainer trainer(cfg);
    trainer.run();
    out.push_back(trainer.record());
  }
  return out;
}

double commitment_plateau(const RunRecord& record, double fraction) {
  if (record.empty()) throw std::invalid_argument("commitment_plateau: empty record");
  const std::int64_t last = record.back().step;
  const auto from = static_cast<std::int64_t>(std::floor(static_cast<double>(last) * (1.0 - fraction)));
  const auto m = record.mean_from(&RunRow::loss_commit, from);
  if (!m) throw std::invalid_argument("commitment_plateau: no commitment values in the final window");
  return *m;
}

std::int64_t usage_saturation_step(const RunRecord& record) {
  std::int64_t since = -1;
  for (const auto& r : record.rows()) {
    if (!r.usage_eval) continue;
    if (*r.usage_eval == 1.0) {
      if (since < 0) since = r.step;
    } else {
      since = -1;
    }
  }
  return since;
}

OneStepBehindReport check_one_step_behind(std::uint64_t seed, std::size_t triples) {
  constexpr std::size_t kDim = 4;
  Rng rng(seed);
  OneStepBehindReport rep;
  rep.triples = triples;
  auto random_vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
  };

  for (std::size_t t = 0; t < triples; ++t) {
    const std::vector<double> c0 = random_vec(kDim);
    const std::vector<double> z = random_vec(kDim);
    // Every tenth triple exercises eta = 0.
    const double eta = (t % 10 == 0) ? 0.0 : rng.uniform(1e-3, 1.0);

    // One SGD step on 1/2 ||z_e - c||^2 with respect to c through autodiff.
    Tensor c = Tensor::from({kDim}, c0, true);
    const Tensor ze = Tensor::from({kDim}, z);
    reset_record();
    backward(scale(sum(square(sub(ze, c))), 0.5));
    Sgd opt({{"c", c}});
    opt.step(eta);
    reset_record();
    const auto oracle = one_step_behind_update(c0, z, eta);
    double dev = 0.0;
    for (std::size_t j = 0; j < kDim; ++j) dev = std::max(dev, std::abs(c.values()[j] - oracle[j]));
    rep.max_deviation = std::max(rep.max_deviation, dev);
    if (eta == 0.0) rep.zero_eta_deviation = std::max(rep.zero_eta_deviation, dev);
  }

  // Corrected update: the code follows the encoder output after the
  // encoder's own SGD step on a task loss.
  const std::vector<double> A = random_vec(kDim * kDim);
  const std::vector<double> b = random_vec(kDim);
  auto task_grad_step = [&](const std::vector<double>& z0, double eta, std::vector<double>& grad) {
    Tensor ze = Tensor::from({1, kDim}, z0, true);
    reset_record();
    const Tensor Am = Tensor::from({kDim, kDim}, A);
    const Tensor bm = Tensor::from({kDim}, b);
    const Tensor h = add(matmul(ze, Am), bm);
    backward(add(scale(sum(square(h)), 0.5), sum(gelu(ze))));
    grad.assign(ze.grad().begin(), ze.grad().end());
    Sgd opt({{"z_e", ze}});
    opt.step(eta);
    reset_record();
    return std::vector<double>(ze.values().begin(), ze.values().end());
  };
  for (std::size_t t = 0; t < triples; ++t) {
    const std::vector<double> c0 = random_vec(kDim);
    const std::vector<double> z = random_vec(kDim);
    const double eta = rng.uniform(1e-2, 0.5);
    double corr_norm[2] = {0.0, 0.0};
    for (int half = 0; half < 2; ++half) {
      const double e = half ? eta / 2.0 : eta;
      std::vector<double> g;
      const auto z_next = task_grad_step(z, e, g);
      const auto commit_part = one_step_behind_update(c0, z, e);
      const auto corrected = one_step_behind_update(c0, z_next, e);
      double sq = 0.0;
      for (std::size_t j = 0; j < kDim; ++j) {
        const double expected = commit_part[j] - e * e * g[j];
        rep.max_identity_deviation = std::max(rep.max_identity_deviation, std::abs(corrected[j] - expected));
        const double corr = corrected[j] - commit_part[j];
        sq += corr * corr;
      }
      corr_norm[half] = std::sqrt(sq);
    }
    if (corr_norm[1] > 0.0) {
      rep.max_ratio_error = std::max(rep.max_ratio_error, std::abs(corr_norm[0] / corr_norm[1] - 4.0));
    }
  }
  return rep;
}

MarginReport check_margin_stability(std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ConfigError("margin check: trials must be positive");
  Rng rng(seed);
  MarginReport rep;
  auto random_direction = [&](std::size_t d, double norm) {
    std::vector<double> v(d);
    double s = 0.0;
    for (double& x : v) {
      x = rng.normal();
      s += x * x;
    }
    s = std::sqrt(s);
    for (double& x : v) x *= norm / s;
    return v;
  };

  while (rep.trials < trials) {
    const std::size_t d = 1 + rng.index(8);
    const std::size_t K = 2 + rng.index(31);
    Tensor codes = rng.normal_tensor({K, d}, 1.0);
    std::vector<double> z(d);
    for (double& x : z) x = rng.normal();
    const AssignmentMargin am = assignment_margin(z, codes);
    if (!(am.margin() > 0.0)) continue;  // exact ties carry no hypothesis
    ++rep.trials;

    // Encoder move strictly inside the margin: 2 delta_z < m.
    const double delta_z = 0.5 * am.margin() * rng.uniform(0.0, 0.999);
    const auto step = random_direction(d, delta_z);
    std::vector<double> z_next(z);
    for (std::size_t j = 0; j < d; ++j) z_next[j] += step[j];
    const auto moved = nearest_indices(z_next, codes.values(), d);
    if (moved[0] == am.nearest) ++rep.preserved;

    // Codebook drift of at most delta_c per row, arbitrary encoder move.
    const double delta_c = rng.uniform(0.0, 1.0);
    Tensor drifted = codes.clone();
    auto dv = drifted.mutable_values();
    for (std::size_t k = 0; k < K; ++k) {
      const auto dc = random_direction(d, delta_c * rng.uniform());
      for (std::size_t j = 0; j < d; ++j) dv[k * d + j] += dc[j];
    }
    std::vector<double> z_far(z);
    const auto jump = random_direction(d, rng.uniform(0.0, 3.0));
    for (std::size_t j = 0; j < d; ++j) z_far[j] += jump[j];
    const auto x_next = nearest_indices(z_far, drifted.values(), d)[0];
    double shift = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = dv[static_cast<std::size_t>(x_next) * d + j] -
                          codes.values()[static_cast<std::size_t>(am.nearest) * d + j];
      shift += diff * diff;
    }
    shift = std::sqrt(shift);
    const double bound = delta_c + max_pairwise_distance(codes);
    rep.max_shift_ratio = std::max(rep.max_shift_ratio, bound > 0.0 ? shift / bound : 0.0);
    // Relative slack covers rounding in the norms themselves.
    if (shift > bound * (1.0 + 1e-12)) ++rep.center_shift_violations;
  }

  // Boundary witness: codes at 0 and 1 on a line, z = 0.4 gives m = 0.2;
  // a move of 0.11 > m / 2 toward the second code flips the assignment.
  const Tensor line = Tensor::from({2, 1}, {0.0, 1.0});
  const std::vector<double> z0{0.4};
  const AssignmentMargin am = assignment_margin(z0, line);
  const std::vector<double> z1{0.4 + 0.11};
  rep.boundary_flip_found = am.nearest == 0 && 2.0 * 0.11 > am.margin() &&
                            nearest_indices(z1, line.values(), 1)[0] == 1;
  return rep;
}

}  // namespace fvq
