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

// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 when
// any selected criterion fails. Criteria 6 and 7 share one set of training
// runs; 11 reruns a subset of 6 and 8 and compares bit for bit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "fvq/bridge.h"
#include "fvq/experiments.h"
#include "fvq/optim.h"
#include "fvq/quantizer.h"
#include "fvq/tensor_io.h"
#include "fvq/trainer.h"
#include "fvq_tools/commands.h"
#include "fvq_tools/config.h"
#include "gradcheck_suite.h"

namespace fvq {
namespace {

namespace fs = std::filesystem;
using tools::load_config_text;
using tools::RunConfig;
using tools::preset_text;
using tools::summarize_usage;
using tools::UsageSummary;

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kMajority = 4;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;  // printed indented under the verdict
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

RunConfig preset(const std::string& name) { return load_config_text(preset_text(name), name); }

// (K, arm, annealing, seed)
using RunKey = std::tuple<std::size_t, ProjectorKind, bool, std::uint64_t>;

// Shared state between criteria.
struct Shared {
  fs::path out;
  std::map<RunKey, RunRecord> comparison;
  std::map<std::size_t, RunRecord> sweep;
};

void save(const Shared& sh, const std::string& label, const RunRecord& rec) {
  if (sh.out.empty()) return;
  fs::create_directories(sh.out / label);
  rec.save(sh.out / label / "run_record.csv");
}

// 1 ----------------------------------------------------------------------
Outcome gradient_suite() {
  Outcome o;
  o.pass = true;
  double worst_all = 0.0;
  for (const auto& c : testing::grad_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) worst = std::max(worst, c.max_rel_error(seed));
    worst_all = std::max(worst_all, worst);
    o.pass &= worst < testing::kGradTolerance;
    o.notes.push_back(c.name + ": worst " + fmt("%.2e", worst));
  }
  o.detail = std::to_string(testing::grad_cases().size()) + " layers x 50 seeds, worst relative error " +
             fmt("%.2e", worst_all) + " (< 1e-4)";
  return o;
}

// 2 ----------------------------------------------------------------------
Outcome ste_contract() {
  std::size_t trials = 0, passthrough_bad = 0, unselected_bad = 0, unselected_rows = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    reset_record();
    Rng rng(derive_seed(seed, 2));
    const std::size_t k = 8 + rng.index(120), n = 1 + rng.index(64), d = 1 + rng.index(16);
    Tensor cb = rng.normal_tensor({k, d}, 1.0, true);
    Tensor z = rng.normal_tensor({n, d}, 1.0, true);
    const Tensor upstream = rng.normal_tensor({n, d}, 1.0);
    const QuantizeResult q = quantize_ste(z, cb);
    backward(sum(mul(q.z_q, upstream)));
    for (std::size_t i = 0; i < n * d; ++i) passthrough_bad += z.grad()[i] != upstream.values()[i] ? 1 : 0;

    reset_record();
    Tensor cb2 = cb.clone();
    cb2.set_requires_grad(true);
    const QuantizeResult q2 = quantize_ste(z, cb2);
    backward(commitment_terms(z, q2.selected).codebook_term);
    std::vector<bool> hit(k, false);
    for (auto i : q2.indices) hit[static_cast<std::size_t>(i)] = true;
    for (std::size_t r = 0; r < k; ++r) {
      if (hit[r]) continue;
      ++unselected_rows;
      for (std::size_t j = 0; j < d; ++j) unselected_bad += cb2.grad()[r * d + j] != 0.0 ? 1 : 0;
    }
    ++trials;
  }
  reset_record();
  Outcome o;
  o.pass = passthrough_bad == 0 && unselected_bad == 0 && unselected_rows > 0;
  o.detail = std::to_string(trials) + " batches: " + std::to_string(passthrough_bad) +
             " pass-through mismatches, " + std::to_string(unselected_bad) + " nonzero entries over " +
             std::to_string(unselected_rows) + " unselected rows";
  return o;
}

// 3 ----------------------------------------------------------------------
Outcome one_step_behind() {
  const OneStepBehindReport r = check_one_step_behind(0, 100);
  Outcome o;
  o.pass = r.triples == 100 && r.max_deviation <= 1e-12 && r.max_ratio_error <= 1e-9;
  o.detail = "100 triples: max |SGD - ((1-eta)c + eta z)| " + fmt("%.2e", r.max_deviation) +
             " (<= 1e-12), eta^2 ratio error " + fmt("%.2e", r.max_ratio_error) + " (<= 1e-9)";
  o.notes.push_back("eta = 0 deviation " + fmt("%.2e", r.zero_eta_deviation) + ", identity deviation " +
                    fmt("%.2e", r.max_identity_deviation));
  return o;
}

// 4 ----------------------------------------------------------------------
Outcome margin_property() {
  const MarginReport r = check_margin_stability(10000, 0);
  Outcome o;
  o.pass = r.trials == 10000 && r.preserved == r.trials && r.center_shift_violations == 0;
  o.detail = std::to_string(r.trials) + " trials: " + std::to_string(r.trials - r.preserved) +
             " index flips, " + std::to_string(r.center_shift_violations) + " center-shift violations (max ratio " +
             fmt("%.3f", r.max_shift_ratio) + ")";
  return o;
}

// 5 ----------------------------------------------------------------------
Outcome schedule() {
  Outcome o;
  o.pass = true;
  double worst_edge = 0.0, worst_point = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
  for (std::int64_t total : {1000, 2000, 100000}) {
    const ScheduleConfig cfg = ScheduleConfig::reconstruction(1.0, total);
    const std::int64_t w = total / 10, c = total * 37 / 100;
    worst_point = std::max({worst_point, rel(lr_multiplier(cfg, 0), 0.005), rel(lr_multiplier(cfg, w), 1.0),
                            rel(lr_multiplier(cfg, total), 0.01)});
    for (std::int64_t b : {w, c}) {
      // Each side's linear piece, extended to the boundary, meets the value there.
      const double left = 2.0 * lr_multiplier(cfg, b - 1) - lr_multiplier(cfg, b - 2);
      const double right = 2.0 * lr_multiplier(cfg, b + 1) - lr_multiplier(cfg, b + 2);
      worst_edge = std::max({worst_edge, rel(left, lr_multiplier(cfg, b)), rel(right, lr_multiplier(cfg, b))});
    }
  }
  // 40 epochs: warmup ends at epoch 4.
  const ScheduleConfig epochs = ScheduleConfig::reconstruction(1.0, 40);
  worst_point = std::max(worst_point, rel(lr_multiplier(epochs, 4), 1.0));
  o.pass = worst_point <= 1e-12 && worst_edge <= 1e-12;
  o.detail = "envelope 0.005 -> 1 (10%) -> 0.01 off by " + fmt("%.1e", worst_point) + ", boundary mismatch " +
             fmt("%.1e", worst_edge) + " (<= 1e-12 relative)";
  return o;
}

// 6 and 7 ----------------------------------------------------------------
void run_comparison(Shared& sh) {
  const RunConfig cfg = preset("projector-comparison");
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    for (const auto& sd : cfg.experiment.sizes) {
      std::vector<std::pair<ProjectorKind, bool>> arms{
          {ProjectorKind::kBridge, true}, {ProjectorKind::kLinear, true}, {ProjectorKind::kNone, true}};
      if (sd.codebook_size == 1024) arms.push_back({ProjectorKind::kBridge, false});
      for (auto [arm, anneal] : arms) {
        const RunRecord rec = run_projector_comparison(cfg.train, sd.codebook_size, sd.dim, arm, anneal, seed);
        save(sh, std::to_string(sd.codebook_size) + "x" + std::to_string(sd.dim) + "-" + projector_name(arm) +
                     (anneal ? "-anneal" : "-const") + "-s" + std::to_string(seed),
             rec);
        sh.comparison[RunKey{sd.codebook_size, arm, anneal, seed}] = rec;
      }
    }
  }
}

Outcome usage_reproduction(Shared& sh) {
  run_comparison(sh);
  const RunConfig cfg = preset("projector-comparison");
  const std::int64_t total = cfg.train.steps();
  Outcome o;
  o.pass = true;
  for (const auto& sd : cfg.experiment.sizes) {
    std::size_t saturated = 0, linear_lower = 0, none_low = 0;
    std::string finals;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const UsageSummary b = summarize_usage(sh.comparison.at(RunKey{sd.codebook_size, ProjectorKind::kBridge, true, seed}));
      const UsageSummary l = summarize_usage(sh.comparison.at(RunKey{sd.codebook_size, ProjectorKind::kLinear, true, seed}));
      const UsageSummary n = summarize_usage(sh.comparison.at(RunKey{sd.codebook_size, ProjectorKind::kNone, true, seed}));
      saturated += b.saturated_by(0.2, total) ? 1 : 0;
      linear_lower += l.final_usage < b.final_usage ? 1 : 0;
      none_low += n.final_usage < 0.5 ? 1 : 0;
      finals += (seed ? "; " : "") + fmt("%.3f", b.final_usage) + "/" + fmt("%.3f", l.final_usage) + "/" +
                fmt("%.3f", n.final_usage);
    }
    const bool size_ok = saturated >= kMajority && linear_lower >= kMajority && (sd.dim < 32 || none_low >= kMajority);
    o.pass &= size_ok;
    std::string note = "K=" + std::to_string(sd.codebook_size) + " d=" + std::to_string(sd.dim) +
                       ": bridge saturated by 20% in " + std::to_string(saturated) + "/5, linear below bridge in " +
                       std::to_string(linear_lower) + "/5";
    if (sd.dim >= 32) note += ", none below 0.5 in " + std::to_string(none_low) + "/5";
    o.notes.push_back(note);
    o.notes.push_back("  final usage bridge/linear/none per seed: " + finals);
  }
  o.detail = "3 sizes x 3 arms x 5 seeds, need >= 4/5 seeds per clause";
  return o;
}

Outcome reconstruction_order(Shared& sh) {
  std::size_t ordered = 0;
  Outcome o;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const double on = tools::final_eval_mse(sh.comparison.at(RunKey{1024, ProjectorKind::kBridge, true, seed}));
    const double off = tools::final_eval_mse(sh.comparison.at(RunKey{1024, ProjectorKind::kBridge, false, seed}));
    const double plain = tools::final_eval_mse(sh.comparison.at(RunKey{1024, ProjectorKind::kNone, true, seed}));
    const bool ok = on < off && off < plain;
    ordered += ok ? 1 : 0;
    o.notes.push_back("seed " + std::to_string(seed) + ": " + fmt("%.5f", on) + " < " + fmt("%.5f", off) + " < " +
                      fmt("%.5f", plain) + (ok ? "" : "  (violated)"));
  }
  o.pass = ordered >= kMajority;
  o.detail = "K=1024 d=32 final MSE bridge+anneal < bridge-anneal < plain VQ in " + std::to_string(ordered) +
             "/5 seeds (need 4)";
  return o;
}

// 8 ----------------------------------------------------------------------
Outcome codebook_sweep(Shared& sh) {
  const RunConfig cfg = preset("codebook-sweep");
  const auto configs = codebook_sweep_configs(cfg.train, cfg.experiment.sweep, ProjectorKind::kBridge, 0);
  Outcome o;
  o.pass = true;
  double previous = INFINITY;
  for (const auto& tc : configs) {
    Trainer t(tc);
    t.run();
    const std::size_t k = tc.model.codebook_size;
    sh.sweep[k] = t.record();
    save(sh, "sweep-K" + std::to_string(k), t.record());
    const double plateau = commitment_plateau(t.record());
    const double usage = summarize_usage(t.record()).final_usage;
    const bool ok = plateau <= previous && usage == 1.0;
    o.pass &= ok;
    o.notes.push_back("K=" + std::to_string(k) + " p=" + std::to_string(tc.model.bridge.patch) + ": plateau " +
                      fmt("%.5f", plateau) + ", final usage " + fmt("%.4f", usage) + (ok ? "" : "  (violated)"));
    previous = plateau;
  }
  o.detail = "bridge arm, K in {64, 256, 1024}: plateau non-increasing and usage 1.0 at every K";
  return o;
}

// 9 ----------------------------------------------------------------------
Outcome materialization() {
  RunConfig cfg = preset("projector-comparison");
  TrainConfig tc = projector_arm_config(cfg.train, 256, 16, ProjectorKind::kBridge, true, 0);
  tc.schedule = ScheduleConfig::reconstruction(tc.schedule.base_lr, 30);
  tc.eval_every = 30;
  Trainer t(tc);
  t.run();
  const fs::path dir = fs::temp_directory_path() / "fvq_acceptance_materialize";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const BridgeConfig b = tc.model.resolved_bridge();
  const MaterializedCodebookInfo info{256, 16, b.patch, b.resolved_latent(), b.depth, "acceptance@30"};
  export_materialized(dir / "a.fvq", t.model().materialized_codebook(), info);
  const Tensor loaded = load_materialized(dir / "a.fvq");

  reset_record();
  const Tensor live = t.model().effective_codebook();
  Rng rng(9);
  double rms = 0.0;
  for (double v : live.values()) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(live.numel()));
  const Tensor probes = rng.normal_tensor({1000, 16}, rms);
  const auto a = nearest_indices(probes, loaded), c = nearest_indices(probes, live);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mismatches += a[i] != c[i] ? 1 : 0;
  reset_record();

  export_materialized(dir / "b.fvq", loaded, load_materialized_info(dir / "a.fvq"));
  const bool bytes_equal = read_file(dir / "a.fvq") == read_file(dir / "b.fvq") &&
                           read_file(dir / "a.fvq.json") == read_file(dir / "b.fvq.json");
  fs::remove_all(dir);
  Outcome o;
  o.pass = mismatches == 0 && bytes_equal;
  o.detail = "1000 probes, " + std::to_string(mismatches) + " index mismatches vs the live bridge; re-export " +
             (bytes_equal ? "byte-identical" : "differs");
  return o;
}

// 10 ---------------------------------------------------------------------
Outcome residual_generalization() {
  const RunConfig cfg = preset("projector-comparison");
  TrainConfig depth1 = projector_arm_config(cfg.train, 256, 16, ProjectorKind::kBridge, true, 0);
  TrainConfig depth4 = depth1;
  depth4.model.rq_depth = 4;
  Trainer t1(depth1), t4(depth4);
  t1.run();
  t4.run();
  const double m1 = tools::final_eval_mse(t1.record()), m4 = tools::final_eval_mse(t4.record());

  // Depth-1 residual search against plain nearest-code quantization, on the
  // trained model's own encoder outputs.
  reset_record();
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor images = make_batch(t1.eval_data(), idx);
  const Tensor z = t1.model().encode(images);
  const Tensor cb = t1.model().effective_codebook();
  const QuantizeResult plain = quantize_ste(z, cb);
  const ResidualQuantizeResult rq = residual_quantize(z, cb, 1);
  const VqnOutput out = t1.model().forward(images);
  bool exact = plain.indices == rq.indices && plain.indices == out.indices;
  for (std::size_t i = 0; i < plain.z_q.numel() && exact; ++i) {
    exact = plain.z_q.values()[i] == rq.z_q.values()[i] && plain.z_q.values()[i] == out.z_q.values()[i];
  }
  reset_record();
  Outcome o;
  o.pass = m4 <= m1 && exact;
  o.detail = "K=256 d=16 bridge: depth-4 MSE " + fmt("%.5f", m4) + " vs depth-1 " + fmt("%.5f", m1) +
             "; depth-1 RQ " + (exact ? "bit-identical to" : "differs from") + " plain VQ on " +
             std::to_string(z.dim(0)) + " vectors";
  return o;
}

// 11 ---------------------------------------------------------------------
Outcome determinism(Shared& sh) {
  Outcome o;
  o.pass = true;
  const RunConfig cfg = preset("projector-comparison");
  if (auto it = sh.comparison.find(RunKey{256, ProjectorKind::kBridge, true, 0}); it != sh.comparison.end()) {
    const bool same = run_projector_comparison(cfg.train, 256, 16, ProjectorKind::kBridge, true, 0) == it->second;
    o.pass &= same;
    o.notes.push_back(std::string("criterion 6 run K=256 bridge seed 0 rerun: ") + (same ? "identical" : "differs"));
  }
  if (auto it = sh.sweep.find(64); it != sh.sweep.end()) {
    const RunConfig sc = preset("codebook-sweep");
    Trainer t(codebook_sweep_configs(sc.train, sc.experiment.sweep, ProjectorKind::kBridge, 0).front());
    t.run();
    const bool same = t.record() == it->second;
    o.pass &= same;
    o.notes.push_back(std::string("criterion 8 run K=64 rerun: ") + (same ? "identical" : "differs"));
  }
  // Checkpoints, including the interrupted-and-resumed path.
  const fs::path dir = fs::temp_directory_path() / "fvq_acceptance_determinism";
  fs::remove_all(dir);
  TrainConfig tc = projector_arm_config(cfg.train, 256, 16, ProjectorKind::kBridge, true, 3);
  tc.schedule = ScheduleConfig::reconstruction(tc.schedule.base_lr, 60);
  tc.eval_every = 20;
  std::vector<std::string> bytes;
  std::vector<RunRecord> records;
  for (int rep = 0; rep < 2; ++rep) {
    Trainer t(tc, "acceptance");
    t.checkpoint_dir = dir / std::to_string(rep);
    t.run();
    bytes.push_back(read_file(t.checkpoint_dir / "checkpoint.fvq"));
    records.push_back(t.record());
  }
  {
    Trainer first(tc, "acceptance");
    first.checkpoint_dir = dir / "resumed";
    first.run(25);
    Trainer second(tc, "acceptance");
    second.checkpoint_dir = dir / "resumed";
    second.load_checkpoint(dir / "resumed" / "checkpoint.fvq");
    second.run();
    bytes.push_back(read_file(dir / "resumed" / "checkpoint.fvq"));
    records.push_back(second.record());
  }
  fs::remove_all(dir);
  const bool ckpt = bytes[0] == bytes[1] && bytes[0] == bytes[2] && records[0] == records[1] && records[0] == records[2];
  o.pass &= ckpt;
  o.notes.push_back(std::string("checkpoints of two runs and a resumed run: ") + (ckpt ? "byte-identical" : "differ"));
  o.detail = "identical config and seed reproduce RunRecords and checkpoints bit for bit";
  return o;
}

}  // namespace
}  // namespace fvq

int main(int argc, char** argv) {
  using namespace fvq;
  CLI::App app{"fvq acceptance criteria"};
  std::vector<int> only;
  std::string out;
  app.add_option("--only", only, "run just these criteria (7 implies 6; 11 reruns what ran)")->delimiter(',');
  app.add_option("--out", out, "write the training RunRecords under this directory");
  CLI11_PARSE(app, argc, argv);

  Shared shared;
  shared.out = out;
  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "straight-through contract", 5, ste_contract},
      {3, "one-step-behind update", 5, one_step_behind},
      {4, "assignment margin", 30, margin_property},
      {5, "learning-rate schedule", 1, schedule},
      {6, "codebook usage by projector", 1800, [&] { return usage_reproduction(shared); }},
      {7, "reconstruction ordering", 0, [&] { return reconstruction_order(shared); }},
      {8, "codebook-size sweep", 900, [&] { return codebook_sweep(shared); }},
      {9, "materialization", 5, materialization},
      {10, "residual quantization", 600, residual_generalization},
      {11, "determinism", 0, [&] { return determinism(shared); }},
  };
  std::set<int> selected(only.begin(), only.end());
  if (selected.count(7)) selected.insert(6);

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.name << ": " << o.detail << " ["
              << fmt("%.1f", secs) << " s" << (c.budget_s > 0 ? ", budget " + fmt("%.0f", c.budget_s) + " s" : "")
              << (in_time ? "" : ", over budget") << "]\n";
    for (const auto& n : o.notes) std::cout << "      " << n << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
