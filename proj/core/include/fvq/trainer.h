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

// Training loop for the image VQN.
//
// Row `s` of the run record carries the training losses of update s (taken
// at learning rate lr_at(s)) and, on evaluation steps, metrics of the model
// as it stood before that update. A final row at s = steps holds only the
// closing evaluation.

#ifndef FVQ_TRAINER_H_
#define FVQ_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fvq/data.h"
#include "fvq/models.h"
#include "fvq/optim.h"
#include "fvq/run_record.h"

namespace fvq {

struct DataConfig {
  std::string source = "procedural";  // "procedural" or "imgb"
  std::filesystem::path dir;          // imgb directory
  std::size_t count = 1024;           // procedural training images
  std::size_t eval_count = 0;         // 0 means K images (16 vectors per code at the default size)
};

struct TrainConfig {
  VQNConfig model;
  ScheduleConfig schedule;  // total_steps is the training budget
  std::size_t batch_size = 32;
  std::size_t eval_every = 0;        // 0 means total_steps / 10
  std::size_t checkpoint_every = 0;  // 0 means only at the end
  std::size_t usage_window = 100;    // steps in the rolling training-usage window
  DataConfig data;
  AdamOptions adam;
  std::uint64_t seed = 0;

  std::int64_t steps() const { return schedule.total_steps; }
  std::size_t resolved_eval_every() const;
  std::size_t resolved_eval_count() const;
  void validate() const;
};

struct EvalReport {
  double usage = 0.0;
  double set_distance = 0.0;
  double mse = 0.0;
  double commitment = 0.0;
  std::size_t used_codes = 0;
  std::size_t vectors = 0;
  std::string to_json() const;
};

// Rolling count of code hits over the last `window` training steps.
class UsageWindow {
 public:
  UsageWindow(std::size_t codebook_size, std::size_t window);
  void push(const std::vector<std::int32_t>& indices);
  double usage() const;
  const std::deque<std::vector<std::int32_t>>& steps() const { return steps_; }
  void clear();

 private:
  std::vector<std::uint32_t> counts_;
  std::size_t used_ = 0;
  std::size_t window_;
  std::deque<std::vector<std::int32_t>> steps_;
};

class Trainer {
 public:
  // `config_echo` is stored verbatim in checkpoints.
  explicit Trainer(const TrainConfig& config, std::string config_echo = "");

  const TrainConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  bool finished() const { return step_ >= config_.steps(); }
  const RunRecord& record() const { return record_; }
  Vqn& model() { return *model_; }
  const Vqn& model() const { return *model_; }
  const ImageSource& train_data() const { return *train_; }
  const ImageSource& eval_data() const { return *eval_; }

  // Trains through step `stop_at` (exclusive; defaults to the full budget),
  // writing checkpoints into `checkpoint_dir` when it is non-empty.
  void run(std::int64_t stop_at = -1);
  EvalReport evaluate() const;

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores parameters, optimizer moments, usage window, run record and
  // step counter. The model shape must match this trainer's config.
  void load_checkpoint(const std::filesystem::path& path);
  static std::string checkpoint_config_echo(const std::filesystem::path& path);

  std::filesystem::path checkpoint_dir;
  std::function<void(const RunRow&)> on_row;

 private:
  void train_step(RunRow& row);
  bool is_eval_step(std::int64_t s) const;

  TrainConfig config_;
  std::string echo_;
  std::unique_ptr<ImageSource> train_;
  std::unique_ptr<ImageSource> eval_;
  std::unique_ptr<Vqn> model_;
  std::unique_ptr<Adam> optimizer_;
  UsageWindow window_;
  RunRecord record_;
  std::int64_t step_ = 0;
};

inline constexpr const char* kTrainerStateName = "trainer.state";
inline constexpr const char* kTrainerWindowName = "trainer.usage_window";

}  // namespace fvq

#endif  // FVQ_TRAINER_H_
