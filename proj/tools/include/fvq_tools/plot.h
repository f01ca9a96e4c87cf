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

// Standalone SVG line charts.

#ifndef FVQ_TOOLS_PLOT_H_
#define FVQ_TOOLS_PLOT_H_

#include <string>
#include <vector>

#include "fvq/run_record.h"

namespace fvq::tools {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  bool equal_aspect = false;  // same units per pixel on both axes
};

// One <polyline> per non-empty series. Non-finite points (and non-positive
// ones under log_y) are skipped.
std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series);

// kind: usage, lr or loss. Throws std::invalid_argument on an unknown kind
// and when the record has no values for the requested columns.
std::string plot_run_record(const RunRecord& record, const std::string& kind);
std::string plot_trajectory(const std::vector<TrajectoryPoint>& points);

}  // namespace fvq::tools

#endif  // FVQ_TOOLS_PLOT_H_
