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

#include "fvq/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fvq/random.h"
#include "fvq/tensor_io.h"
#include "json.hpp"

namespace fvq {
namespace {

constexpr std::uint64_t kTrainDataStream = 0xDA7A;
constexpr std::uint64_t kEvalDataStream = 0xE7A1;
constexpr std::size_t kEvalChunk = 256;

std::string moment_name(const char* which, const std::string& param) {
  return std::string("optim.") + which + "." + param;
}

double mean_row_norm(const Tensor& t) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  const auto v = t.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total += l2_norm(v.subspan(r * cols, cols));
  return total / static_cast<double>(rows);
}

}  // namespace

std::size_t TrainConfig::resolved_eval_every() const {
  if (eval_every > 0) return eval_every;
  return static_cast<std::size_t>(std::max<std::int64_t>(1, steps() / 10));
}

std::size_t TrainConfig::resolved_eval_count() const {
  return data.eval_count > 0 ? data.eval_count : model.codebook_size;
}

void TrainConfig::validate() const {
  model.validate();
  schedule.validate();
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (usage_window == 0) throw ConfigError("train: usage_window must be positive");
  if (data.source != "procedural" && data.source != "imgb") {
    throw ConfigError("data: unknown source '" + data.source + "' (expected procedural or imgb)");
  }
  if (data.source == "procedural" && data.count == 0) throw ConfigError("data: count must be positive");
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["usage"] = usage;
  j["set_distance"] = set_distance;
  j["mse"] = mse;
  j["commitment"] = commitment;
  j["used_codes"] = used_codes;
  j["vectors"] = vectors;
  return j.dump(2);
}

UsageWindow::UsageWindow(std::size_t codebook_size, std::size_t window)
    : counts_(codebook_size, 0), window_(window) {}

void UsageWindow::push(const std::vector<std::int32_t>& indices) {
  for (std::int32_t i : indices) {
    if (counts_[static_cast<std::size_t>(i)]++ == 0) ++used_;
  }
  steps_.push_back(indices);
  if (steps_.size() > window_) {
    for (std::int32_t i : steps_.front()) {
      if (--counts_[static_cast<std::size_t>(i)] == 0) --used_;
    }
    steps_.pop_front();
  }
}

double UsageWindow::usage() const {
  return static_cast<double>(used_) / static_cast<double>(counts_.size());
}

void UsageWindow::clear() {
  std::fill(counts_.begin(), counts_.end(), 0u);
  used_ = 0;
  steps_.clear();
}

Trainer::Trainer(const TrainConfig& config, std::string config_echo)
    : config_(config),
      echo_(std::move(config_echo)),
      window_(config.model.codebook_size, config.usage_window) {
  config_.validate();
  const ImageShape shape{config_.model.image_size, config_.model.image_size, config_.model.channels};
  if (config_.data.source == "imgb") {
    auto all = std::make_unique<InMemoryImages>(read_imgb_dir(config_.data.dir));
    const ImageShape s = all->shape();
    if (s.height != shape.height || s.width != shape.width || s.channels != shape.channels) {
      throw ConfigError("data: images in " + config_.data.dir.string() + " are " +
                        std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
                        std::to_string(s.channels) + ", model expects " + std::to_string(shape.height) +
                        "x" + std::to_string(shape.width) + "x" + std::to_string(shape.channels));
    }
    // The eval pass covers the whole directory.
    eval_ = std::make_unique<InMemoryImages>(*all);
    train_ = std::move(all);
  } else {
    train_ = std::make_unique<ProceduralImages>(config_.data.count, shape,
                                                derive_seed(config_.seed, kTrainDataStream));
    eval_ = std::make_unique<ProceduralImages>(config_.resolved_eval_count(), shape,
                                               derive_seed(config_.seed, kEvalDataStream));
  }
  model_ = std::make_unique<Vqn>(config_.model, config_.seed);
  optimizer_ = std::make_unique<Adam>(model_->parameters(), config_.adam);
}

bool Trainer::is_eval_step(std::int64_t s) const {
  if (s == config_.steps()) return true;
  const auto every = static_cast<std::int64_t>(config_.resolved_eval_every());
  return s > 0 && s % every == 0;
}

void Trainer::train_step(RunRow& row) {
  const auto idx = batch_indices(train_->size(), config_.batch_size, config_.seed, step_);
  const Tensor images = make_batch(*train_, idx);
  optimizer_->zero_grad();
  reset_record();
  const VqnOutput out = model_->forward(images);
  const LossTerms loss = model_->loss(out, images);
  backward(loss.total);
  optimizer_->step(row.lr);
  reset_record();

  window_.push(out.indices);
  row.loss_rec = loss.reconstruction.item();
  row.loss_commit = loss.commitment.item();
  row.usage_window = window_.usage();
  row.ste_error_norm = mean_row_norm(out.ste_error);
}

void Trainer::run(std::int64_t stop_at) {
  const std::int64_t total = config_.steps();
  const std::int64_t end = stop_at < 0 ? total : std::min(stop_at, total);
  const auto ckpt_every = static_cast<std::int64_t>(config_.checkpoint_every);
  auto checkpoint = [&]() {
    if (checkpoint_dir.empty()) return;
    std::filesystem::create_directories(checkpoint_dir);
    save_checkpoint(checkpoint_dir / "checkpoint.fvq");
  };
  while (step_ < end) {
    RunRow row;
    row.step = step_;
    row.lr = lr_at(config_.schedule, step_);
    if (is_eval_step(step_)) {
      const EvalReport r = evaluate();
      row.usage_eval = r.usage;
      row.set_distance = r.set_distance;
      row.eval_mse = r.mse;
    }
    train_step(row);
    record_.append(row);
    if (on_row) on_row(row);
    ++step_;
    if (ckpt_every > 0 && step_ % ckpt_every == 0 && step_ < total) checkpoint();
  }
  if (step_ == total && (record_.empty() || record_.back().step < total)) {
    RunRow row;
    row.step = total;
    row.lr = lr_at(config_.schedule, total);
    const EvalReport r = evaluate();
    row.usage_eval = r.usage;
    row.set_distance = r.set_distance;
    row.eval_mse = r.mse;
    record_.append(row);
    if (on_row) on_row(row);
    checkpoint();
  } else if (step_ < total && stop_at >= 0) {
    checkpoint();
  }
}

EvalReport Trainer::evaluate() const {
  NoGradGuard guard;
  const Tensor codebook = model_->materialized_codebook();
  UsageStats stats(config_.model.codebook_size);
  const std::size_t n = eval_->size();
  double sq_err_sum = 0.0, dist_sum = 0.0, commit_sum = 0.0;
  std::size_t pixel_count = 0, vector_count = 0;
  const std::size_t d = config_.model.dim;
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t stop = std::min(n, start + kEvalChunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor images = make_batch(*eval_, idx);
    const VqnOutput out = model_->forward_with_codebook(images, codebook);
    reset_record();
    // Usage counts the first-stage assignment, which is also the nearest code.
    const std::size_t depth = config_.model.rq_depth;
    std::vector<std::int32_t> first(out.indices.size() / depth);
    for (std::size_t i = 0; i < first.size(); ++i) first[i] = out.indices[i * depth];
    stats.record(first);
    const auto rv = out.recon.values(), iv = images.values();
    for (std::size_t i = 0; i < rv.size(); ++i) sq_err_sum += (rv[i] - iv[i]) * (rv[i] - iv[i]);
    pixel_count += rv.size();
    // Nearest-code squared distance, recomputed from the first-stage code.
    const auto zv = out.z_e.values(), cv = codebook.values();
    for (std::size_t i = 0; i < first.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = zv[i * d + j] - cv[static_cast<std::size_t>(first[i]) * d + j];
        s += diff * diff;
      }
      dist_sum += s;
    }
    const auto ev = out.ste_error.values();
    double commit = 0.0;
    for (double e : ev) commit += e * e;
    commit_sum += commit;
    vector_count += first.size();
  }
  EvalReport r;
  r.usage = stats.usage();
  r.used_codes = stats.used_codes();
  r.vectors = vector_count;
  r.mse = sq_err_sum / static_cast<double>(pixel_count);
  r.set_distance = dist_sum / static_cast<double>(vector_count);
  r.commitment = (1.0 + config_.model.beta) * commit_sum / static_cast<double>(vector_count * d);
  return r;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  std::vector<NamedTensor> out;
  const ParameterList& params = optimizer_->parameters();
  const auto& states = optimizer_->states();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params[i].name, params[i].tensor, DType::kF64, {}});
    const Shape& shape = params[i].tensor.shape();
    const auto& st = states[i];
    std::vector<double> m = st.m.empty() ? std::vector<double>(shape_numel(shape), 0.0) : st.m;
    std::vector<double> v = st.v.empty() ? std::vector<double>(shape_numel(shape), 0.0) : st.v;
    out.push_back({moment_name("m", params[i].name), Tensor::from(shape, std::move(m)), DType::kF64,
                   {{"t", std::to_string(st.t)}}});
    out.push_back({moment_name("v", params[i].name), Tensor::from(shape, std::move(v)), DType::kF64, {}});
  }
  const auto& steps = window_.steps();
  const std::size_t width = steps.empty() ? 0 : steps.front().size();
  std::vector<double> win;
  win.reserve(steps.size() * width);
  for (const auto& s : steps) win.insert(win.end(), s.begin(), s.end());
  Tensor window = steps.empty() ? Tensor::from({1}, {0.0})
                                : Tensor::from({steps.size(), width}, std::move(win));
  out.push_back({kTrainerWindowName, window, DType::kF64, {{"width", std::to_string(width)}}});
  out.push_back({kTrainerStateName,
                 Tensor::scalar(static_cast<double>(step_)),
                 DType::kF64,
                 {{"step", std::to_string(step_)},
                  {"config", echo_},
                  {"run_record", record_.to_csv()},
                  {"window_steps", std::to_string(steps.size())}}});
  save_tensors(path, out);
}

std::string Trainer::checkpoint_config_echo(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  return find_tensor(tensors, kTrainerStateName).attrs.at("config");
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto tensors = load_tensors(path);
  const NamedTensor& state = find_tensor(tensors, kTrainerStateName);
  const ParameterList& params = optimizer_->parameters();
  auto& states = optimizer_->states();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& p = find_tensor(tensors, params[i].name);
    Tensor target = params[i].tensor;
    if (p.tensor.shape() != target.shape()) {
      throw FormatError("checkpoint tensor '" + params[i].name + "' has shape " +
                        shape_to_string(p.tensor.shape()) + ", model expects " +
                        shape_to_string(target.shape()));
    }
    std::copy(p.tensor.values().begin(), p.tensor.values().end(), target.mutable_values().begin());
    const NamedTensor& m = find_tensor(tensors, moment_name("m", params[i].name));
    const NamedTensor& v = find_tensor(tensors, moment_name("v", params[i].name));
    states[i].t = std::stoll(m.attrs.at("t"));
    if (states[i].t == 0) {
      states[i].m.clear();
      states[i].v.clear();
    } else {
      states[i].m.assign(m.tensor.values().begin(), m.tensor.values().end());
      states[i].v.assign(v.tensor.values().begin(), v.tensor.values().end());
    }
  }
  window_.clear();
  const NamedTensor& win = find_tensor(tensors, kTrainerWindowName);
  const std::size_t width = std::stoul(win.attrs.at("width"));
  const std::size_t count = std::stoul(state.attrs.at("window_steps"));
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<std::int32_t> idx(width);
    for (std::size_t j = 0; j < width; ++j) {
      idx[j] = static_cast<std::int32_t>(win.tensor.values()[s * width + j]);
    }
    window_.push(idx);
  }
  record_ = RunRecord::from_csv(state.attrs.at("run_record"));
  step_ = std::stoll(state.attrs.at("step"));
  if (step_ < 0 || step_ > config_.steps()) {
    throw FormatError("checkpoint step " + std::to_string(step_) + " outside the configured budget");
  }
}

}  // namespace fvq
