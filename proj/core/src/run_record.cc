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

#include "fvq/run_record.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "fvq/tensor_io.h"

namespace fvq {
namespace {

using Metric = std::optional<double> RunRow::*;

constexpr Metric kMetrics[] = {&RunRow::loss_rec,     &RunRow::loss_commit,  &RunRow::usage_window,
                               &RunRow::usage_eval,   &RunRow::set_distance, &RunRow::ste_error_norm,
                               &RunRow::eval_mse};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& field, std::size_t row) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw CsvError("row " + std::to_string(row) + ": '" + field + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(const std::string& field, std::size_t row) {
  std::int64_t v = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw CsvError("row " + std::to_string(row) + ": '" + field + "' is not an integer");
  }
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::vector<std::string>& RunRecord::columns() {
  static const std::vector<std::string> cols = {"step",         "lr",         "loss_rec",
                                                "loss_commit",  "usage_window", "usage_eval",
                                                "set_distance", "ste_error_norm", "eval_mse"};
  return cols;
}

void RunRecord::append(const RunRow& row) {
  if (!rows_.empty() && row.step <= rows_.back().step) {
    throw std::invalid_argument("RunRecord: step " + std::to_string(row.step) +
                                " does not follow step " + std::to_string(rows_.back().step));
  }
  rows_.push_back(row);
}

void RunRecord::truncate_after(std::int64_t step) {
  while (!rows_.empty() && rows_.back().step > step) rows_.pop_back();
}

std::optional<double> RunRecord::last(Metric metric) const {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it) {
    if ((*it).*metric) return (*it).*metric;
  }
  return std::nullopt;
}

std::optional<double> RunRecord::mean_from(Metric metric, std::int64_t from_step) const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows_) {
    if (r.step < from_step || !(r.*metric)) continue;
    total += *(r.*metric);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

std::string RunRecord::to_csv() const {
  std::string out;
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : rows_) {
    out += std::to_string(r.step);
    out += "," + format_number(r.lr);
    for (Metric m : kMetrics) {
      out += ",";
      if (r.*m) out += format_number(*(r.*m));
    }
    out += "\n";
  }
  return out;
}

RunRecord RunRecord::from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw CsvError("empty CSV");
  const auto header = split_fields(lines[0]);
  if (header != columns()) throw CsvError("row 1: unexpected header '" + lines[0] + "'");
  RunRecord rec;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row_no = i + 1;
    const auto f = split_fields(lines[i]);
    if (f.size() != header.size()) {
      throw CsvError("row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                     " fields, found " + std::to_string(f.size()));
    }
    RunRow r;
    r.step = parse_int(f[0], row_no);
    r.lr = parse_double(f[1], row_no);
    for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
      if (!f[2 + m].empty()) r.*kMetrics[m] = parse_double(f[2 + m], row_no);
    }
    try {
      rec.append(r);
    } catch (const std::invalid_argument& e) {
      throw CsvError("row " + std::to_string(row_no) + ": " + e.what());
    }
  }
  return rec;
}

void RunRecord::save(const std::filesystem::path& path) const { write_file_atomic(path, to_csv()); }

RunRecord RunRecord::load(const std::filesystem::path& path) { return from_csv(read_file(path)); }

std::string trajectory_to_csv(const std::vector<TrajectoryPoint>& points) {
  std::string out = "step,ze_x,ze_y,zq_x,zq_y\n";
  for (const auto& p : points) {
    out += std::to_string(p.step) + "," + format_number(p.ze_x) + "," + format_number(p.ze_y) + "," +
           format_number(p.zq_x) + "," + format_number(p.zq_y) + "\n";
  }
  return out;
}

std::vector<TrajectoryPoint> trajectory_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw CsvError("empty CSV");
  if (lines[0] != "step,ze_x,ze_y,zq_x,zq_y") throw CsvError("row 1: unexpected header '" + lines[0] + "'");
  std::vector<TrajectoryPoint> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t row_no = i + 1;
    const auto f = split_fields(lines[i]);
    if (f.size() != 5) {
      throw CsvError("row " + std::to_string(row_no) + ": expected 5 fields, found " + std::to_string(f.size()));
    }
    out.push_back({parse_int(f[0], row_no), parse_double(f[1], row_no), parse_double(f[2], row_no),
                   parse_double(f[3], row_no), parse_double(f[4], row_no)});
  }
  return out;
}

}  // namespace fvq
