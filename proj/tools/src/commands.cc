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

#include "fvq_tools/commands.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include "fvq/bridge.h"
#include "fvq/experiments.h"
#include "fvq/tensor_io.h"
#include "fvq/trainer.h"
#include "fvq_tools/plot.h"

namespace fvq::tools {
namespace {

namespace fs = std::filesystem;

constexpr const char* kCheckpointFile = "checkpoint.fvq";

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig cfg = options.config ? load_config_file(*options.config) : [] {
    RunConfig c;
    c.finalize();
    return c;
  }();
  if (options.seed) {
    cfg.seed = *options.seed;
    cfg.finalize();
  }
  if (options.out_dir) cfg.out_dir = *options.out_dir;
  return cfg;
}

fs::path resolve_checkpoint(const CommandOptions& options, const RunConfig* cfg) {
  if (options.checkpoint) return *options.checkpoint;
  if (cfg && !cfg->checkpoint.empty()) return cfg->checkpoint;
  if (cfg) return cfg->out_dir / kCheckpointFile;
  throw ConfigError("no checkpoint given (use --checkpoint or the checkpoint key)");
}

// Config for a checkpoint: --config when given, else the echo stored in it.
RunConfig checkpoint_config(const CommandOptions& options, fs::path& checkpoint) {
  if (options.config) {
    RunConfig cfg = resolve_config(options);
    checkpoint = resolve_checkpoint(options, &cfg);
    return cfg;
  }
  checkpoint = resolve_checkpoint(options, nullptr);
  RunConfig cfg = load_config_text(Trainer::checkpoint_config_echo(checkpoint), checkpoint.string() + ":echo");
  if (options.out_dir) cfg.out_dir = *options.out_dir;
  return cfg;
}

std::string check_line(bool ok, const std::string& what) { return std::string(ok ? "PASS " : "FAIL ") + what + "\n"; }

std::string run_label(std::size_t k, std::size_t d, ProjectorKind arm, bool annealing, std::uint64_t seed) {
  return std::to_string(k) + "x" + std::to_string(d) + "-" + projector_name(arm) + "-" +
         (annealing ? "anneal" : "const") + "-s" + std::to_string(seed);
}

std::size_t majority(std::size_t seeds) {
  return static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(seeds)));
}

}  // namespace

bool UsageSummary::saturated_by(double fraction, std::int64_t total_steps) const {
  return saturation_step >= 0 &&
         static_cast<double>(saturation_step) <= fraction * static_cast<double>(total_steps) + 1e-9;
}

UsageSummary summarize_usage(const RunRecord& record) {
  UsageSummary s;
  for (const auto& row : record.rows()) {
    if (!row.usage_eval) continue;
    s.final_usage = *row.usage_eval;
    s.max_usage = std::max(s.max_usage, *row.usage_eval);
  }
  s.saturation_step = usage_saturation_step(record);
  return s;
}

double final_eval_mse(const RunRecord& record) {
  const auto v = record.last(&RunRow::eval_mse);
  if (!v) throw std::invalid_argument("record has no evaluation rows");
  return *v;
}

int cmd_toy(const RunConfig& config, bool check, std::ostream& out) {
  std::map<ProjectorKind, ToyResult> results;
  for (ProjectorKind arm : config.toy_arms) {
    ToyConfig tc = config.toy;
    tc.projector = arm;
    ToyResult r = run_toy(tc);
    const fs::path dir = config.out_dir / ("toy-" + projector_name(arm));
    write_text(dir / "trajectory.csv", trajectory_to_csv(r.trajectory));
    write_text(dir / "run_record.csv", r.record.to_csv());
    write_text(dir / "trajectory.svg", plot_trajectory(r.trajectory));
    write_text(dir / "usage.svg", plot_run_record(r.record, "usage"));
    const UsageSummary u = summarize_usage(r.record);
    out << "toy " << projector_name(arm) << ": final_usage=" << fmt("%.4f", u.final_usage)
        << " max_usage=" << fmt("%.4f", u.max_usage) << " early_gap=" << fmt("%.4f", r.early_gap)
        << " straightness=" << fmt("%.4f", r.straightness) << " -> " << dir.string() << "\n";
    results.emplace(arm, std::move(r));
  }
  if (!check) return kExitOk;
  const auto none = results.find(ProjectorKind::kNone);
  const auto bridge = results.find(ProjectorKind::kBridge);
  if (none == results.end() || bridge == results.end()) {
    throw ConfigError("toy --check needs toy.arms to include none and bridge");
  }
  const UsageSummary un = summarize_usage(none->second.record), ub = summarize_usage(bridge->second.record);
  const bool gap = bridge->second.early_gap < none->second.early_gap;
  const bool collapse = un.final_usage < 0.2;
  const bool full = ub.max_usage >= 1.0;
  out << check_line(gap, "early ||z_q - z_e||: bridge " + fmt("%.4f", bridge->second.early_gap) + " < none " +
                             fmt("%.4f", none->second.early_gap));
  out << check_line(collapse, "none arm final usage " + fmt("%.4f", un.final_usage) + " < 0.2");
  out << check_line(full, "bridge arm reaches usage 1.0 (max " + fmt("%.4f", ub.max_usage) + ")");
  return gap && collapse && full ? kExitOk : kExitCheckFailed;
}

namespace {

int train_single(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  Trainer trainer(config.train, dump_config(config));
  trainer.checkpoint_dir = config.out_dir;
  fs::path resume;
  if (options.resume) resume = config.out_dir / kCheckpointFile;
  if (options.checkpoint) resume = *options.checkpoint;
  if (!config.checkpoint.empty() && !options.checkpoint) resume = config.checkpoint;
  if (!resume.empty()) {
    trainer.load_checkpoint(resume);
    out << "resumed from " << resume.string() << " at step " << trainer.step() << "\n";
  }
  const std::int64_t total = trainer.config().steps();
  trainer.on_row = [&](const RunRow& row) {
    if (!row.usage_eval) return;
    out << "step " << row.step << "/" << total << " lr=" << fmt("%.3g", row.lr)
        << " usage=" << fmt("%.4f", *row.usage_eval) << " D=" << fmt("%.4g", row.set_distance.value_or(NAN))
        << " mse=" << fmt("%.5g", row.eval_mse.value_or(NAN)) << "\n";
  };
  trainer.run(config.stop_at);
  write_text(config.out_dir / "run_record.csv", trainer.record().to_csv());
  if (!trainer.finished()) {
    out << "stopped at step " << trainer.step() << "; checkpoint in " << config.out_dir.string() << "\n";
    return kExitOk;
  }
  const EvalReport report = trainer.evaluate();
  write_text(config.out_dir / "eval.json", report.to_json());
  const VQNConfig& m = config.train.model;
  MaterializedCodebookInfo info;
  info.codebook_size = m.codebook_size;
  info.dim = m.dim;
  if (m.projector == ProjectorKind::kBridge) {
    const BridgeConfig b = m.resolved_bridge();
    info.patch = b.patch;
    info.latent_dim = b.resolved_latent();
    info.depth = b.depth;
  }
  info.source_run_id = config.out_dir.filename().string() + "@" + std::to_string(trainer.step());
  export_materialized(config.out_dir / "codebook.fvq", trainer.model().materialized_codebook(), info);
  out << "final: " << report.to_json() << "\n";
  if (options.check && report.usage < 1.0) {
    out << check_line(false, "final usage " + fmt("%.4f", report.usage) + " == 1.0");
    return kExitCheckFailed;
  }
  return kExitOk;
}

int train_comparison(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  const ExperimentConfig& ex = config.experiment;
  std::vector<bool> modes;
  if (ex.annealing != AnnealingMode::kOff) modes.push_back(true);
  if (ex.annealing != AnnealingMode::kOn) modes.push_back(false);
  std::string summary = "K,d,arm,annealing,seed,final_usage,max_usage,saturation_step,final_mse\n";
  // (K, arm, annealing) -> per-seed summaries
  std::map<std::tuple<std::size_t, ProjectorKind, bool>, std::vector<std::pair<UsageSummary, double>>> results;
  const std::int64_t total = config.train.steps();
  for (std::size_t s = 0; s < ex.seeds; ++s) {
    const std::uint64_t seed = config.seed + s;
    for (const SizeDim& sd : ex.sizes) {
      for (ProjectorKind arm : ex.arms) {
        for (bool annealing : modes) {
          const RunRecord rec =
              run_projector_comparison(config.train, sd.codebook_size, sd.dim, arm, annealing, seed);
          const std::string label = run_label(sd.codebook_size, sd.dim, arm, annealing, seed);
          write_text(config.out_dir / label / "run_record.csv", rec.to_csv());
          const UsageSummary u = summarize_usage(rec);
          const double mse = final_eval_mse(rec);
          results[{sd.codebook_size, arm, annealing}].push_back({u, mse});
          summary += std::to_string(sd.codebook_size) + "," + std::to_string(sd.dim) + "," + projector_name(arm) +
                     "," + (annealing ? "on" : "off") + "," + std::to_string(seed) + "," +
                     format_double(u.final_usage) + "," + format_double(u.max_usage) + "," +
                     std::to_string(u.saturation_step) + "," + format_double(mse) + "\n";
          out << label << ": final_usage=" << fmt("%.4f", u.final_usage) << " saturation_step=" << u.saturation_step
              << " mse=" << fmt("%.5g", mse) << "\n";
        }
      }
    }
  }
  write_text(config.out_dir / "summary.csv", summary);
  if (!options.check) return kExitOk;

  bool ok = true;
  const std::size_t need = majority(ex.seeds);
  for (const SizeDim& sd : ex.sizes) {
    const auto bridge = results.find({sd.codebook_size, ProjectorKind::kBridge, true});
    if (bridge != results.end()) {
      std::size_t pass = 0;
      for (const auto& [u, mse] : bridge->second) pass += u.saturated_by(0.2, total) ? 1 : 0;
      ok &= pass >= need;
      out << check_line(pass >= need, "K=" + std::to_string(sd.codebook_size) + " bridge saturates by 20% and holds in " +
                                          std::to_string(pass) + "/" + std::to_string(ex.seeds) + " seeds");
      const auto linear = results.find({sd.codebook_size, ProjectorKind::kLinear, true});
      if (linear != results.end()) {
        std::size_t lower = 0;
        for (std::size_t i = 0; i < linear->second.size(); ++i) {
          lower += linear->second[i].first.final_usage < bridge->second[i].first.final_usage ? 1 : 0;
        }
        ok &= lower >= need;
        out << check_line(lower >= need, "K=" + std::to_string(sd.codebook_size) + " linear ends below bridge in " +
                                             std::to_string(lower) + "/" + std::to_string(ex.seeds) + " seeds");
      }
    }
    const auto none = results.find({sd.codebook_size, ProjectorKind::kNone, true});
    if (none != results.end() && sd.dim >= 32) {
      std::size_t low = 0;
      for (const auto& [u, mse] : none->second) low += u.final_usage < 0.5 ? 1 : 0;
      ok &= low >= need;
      out << check_line(low >= need, "K=" + std::to_string(sd.codebook_size) + " none ends below 0.5 usage in " +
                                         std::to_string(low) + "/" + std::to_string(ex.seeds) + " seeds");
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int train_sweep(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  const ExperimentConfig& ex = config.experiment;
  std::string summary = "K,p,seed,plateau,final_usage\n";
  bool ok = true;
  for (std::size_t s = 0; s < ex.seeds; ++s) {
    const std::uint64_t seed = config.seed + s;
    const auto configs = codebook_sweep_configs(config.train, ex.sweep, config.train.model.projector, seed);
    double previous = INFINITY;
    for (const auto& tc : configs) {
      Trainer trainer(tc);
      trainer.run();
      const RunRecord& rec = trainer.record();
      const double plateau = commitment_plateau(rec);
      const UsageSummary u = summarize_usage(rec);
      const std::string label = "K" + std::to_string(tc.model.codebook_size) + "-s" + std::to_string(seed);
      write_text(config.out_dir / label / "run_record.csv", rec.to_csv());
      summary += std::to_string(tc.model.codebook_size) + "," + std::to_string(tc.model.bridge.patch) + "," +
                 std::to_string(seed) + "," + format_double(plateau) + "," + format_double(u.final_usage) + "\n";
      out << label << ": p=" << tc.model.bridge.patch << " plateau=" << fmt("%.5g", plateau)
          << " final_usage=" << fmt("%.4f", u.final_usage) << "\n";
      if (options.check) {
        const bool mono = plateau <= previous;
        const bool full = u.final_usage >= 1.0;
        out << check_line(mono, label + " plateau non-increasing");
        out << check_line(full, label + " usage 1.0");
        ok &= mono && full;
      }
      previous = plateau;
    }
  }
  write_text(config.out_dir / "summary.csv", summary);
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int cmd_train(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  switch (config.experiment.kind) {
    case ExperimentKind::kSingle: return train_single(config, options, out);
    case ExperimentKind::kProjectorComparison: return train_comparison(config, options, out);
    case ExperimentKind::kCodebookSweep: return train_sweep(config, options, out);
  }
  return kExitUsage;
}

int cmd_eval(const CommandOptions& options, std::ostream& out) {
  fs::path checkpoint;
  const RunConfig config = checkpoint_config(options, checkpoint);
  Trainer trainer(config.train);
  trainer.load_checkpoint(checkpoint);
  const EvalReport report = trainer.evaluate();
  const std::string json = report.to_json();
  write_text(config.out_dir / "eval.json", json);
  out << json << "\n";
  if (options.check && report.usage < 1.0) return kExitCheckFailed;
  return kExitOk;
}

int cmd_export(const CommandOptions& options, std::ostream& out) {
  fs::path checkpoint;
  const RunConfig config = checkpoint_config(options, checkpoint);
  Trainer trainer(config.train);
  trainer.load_checkpoint(checkpoint);
  const VQNConfig& m = config.train.model;
  MaterializedCodebookInfo info;
  info.codebook_size = m.codebook_size;
  info.dim = m.dim;
  if (m.projector == ProjectorKind::kBridge) {
    const BridgeConfig b = m.resolved_bridge();
    info.patch = b.patch;
    info.latent_dim = b.resolved_latent();
    info.depth = b.depth;
  }
  info.source_run_id = checkpoint.parent_path().filename().string() + "@" + std::to_string(trainer.step());
  const fs::path path = config.export_path.empty() ? config.out_dir / "codebook.fvq" : config.export_path;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  export_materialized(path, trainer.model().materialized_codebook(), info);
  out << "exported " << m.codebook_size << "x" << m.dim << " codebook to " << path.string() << "\n";
  return kExitOk;
}

int cmd_plot(const RunConfig& config, const CommandOptions& options, std::ostream& out) {
  const fs::path input = options.input ? *options.input : config.plot_input;
  const std::string kind = options.kind ? *options.kind : config.plot_kind;
  if (input.empty()) throw ConfigError("plot: no input CSV (use --input or plot.input)");
  const std::string text = read_file(input);
  std::string svg;
  if (kind == "trajectory") {
    svg = plot_trajectory(trajectory_from_csv(text));
  } else {
    const RunRecord record = RunRecord::from_csv(text);
    if (record.empty()) throw CsvError(input.string() + ": no data rows");
    svg = plot_run_record(record, kind);
  }
  const fs::path path = config.out_dir / (input.stem().string() + "-" + kind + ".svg");
  write_text(path, svg);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

int run_command(const std::string& command, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (command == "toy") return cmd_toy(resolve_config(options), options.check, out);
    if (command == "train") return cmd_train(resolve_config(options), options, out);
    if (command == "eval") return cmd_eval(options, out);
    if (command == "export") return cmd_export(options, out);
    if (command == "plot") return cmd_plot(resolve_config(options), options, out);
    if (command == "reference") {
      out << config_reference_markdown();
      return kExitOk;
    }
    err << "fvq: unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "fvq " << command << ": error: " << ex.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace fvq::tools
