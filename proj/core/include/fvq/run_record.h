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

// Per-step training metrics and 2-D trajectories, persisted as CSV.
//
// Numbers are written with 17 significant digits so a CSV round-trip is
// exact; a missing metric is an empty field.

#ifndef FVQ_RUN_RECORD_H_
#define FVQ_RUN_RECORD_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fvq {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunRow {
  std::int64_t step = 0;
  double lr = 0.0;
  std::optional<double> loss_rec;
  std::optional<double> loss_commit;
  std::optional<double> usage_window;
  std::optional<double> usage_eval;
  std::optional<double> set_distance;
  std::optional<double> ste_error_norm;
  std::optional<double> eval_mse;

  bool operator==(const RunRow&) const = default;
};

class RunRecord {
 public:
  static const std::vector<std::string>& columns();

  // Steps must be strictly increasing.
  void append(const RunRow& row);
  const std::vector<RunRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  const RunRow& back() const { return rows_.back(); }
  // Drops every row with step > `step` (used when resuming).
  void truncate_after(std::int64_t step);

  // Last row that has the metric; nullopt when none does.
  std::optional<double> last(std::optional<double> RunRow::*metric) const;
  // Mean of the metric over rows with step >= from_step that carry it.
  std::optional<double> mean_from(std::optional<double> RunRow::*metric, std::int64_t from_step) const;

  std::string to_csv() const;
  static RunRecord from_csv(const std::string& text);  // throws CsvError with row number
  void save(const std::filesystem::path& path) const;
  static RunRecord load(const std::filesystem::path& path);

  bool operator==(const RunRecord&) const = default;

 private:
  std::vector<RunRow> rows_;
};

struct TrajectoryPoint {
  std::int64_t step = 0;
  double ze_x = 0.0, ze_y = 0.0;
  double zq_x = 0.0, zq_y = 0.0;
  bool operator==(const TrajectoryPoint&) const = default;
};

std::string trajectory_to_csv(const std::vector<TrajectoryPoint>& points);
std::vector<TrajectoryPoint> trajectory_from_csv(const std::string& text);

// Shortest-round-trip-safe decimal rendering used by every CSV writer.
std::string format_number(double v);

}  // namespace fvq

#endif  // FVQ_RUN_RECORD_H_
