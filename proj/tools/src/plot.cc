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

#include "fvq_tools/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

namespace fvq::tools {
namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 72, kRight = 150, kTop = 40, kBottom = 56;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  void pad() {
    if (hi - lo < 1e-12) {
      const double d = std::max(std::abs(lo) * 0.05, 1e-6);
      lo -= d;
      hi += d;
    }
  }
};

std::vector<double> ticks(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i <= n; ++i) out.push_back(lo + (hi - lo) * i / n);
  return out;
}

}  // namespace

std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series) {
  auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!spec.log_y || y > 0); };
  Range xr, yr;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      xr.add(s.x[i]);
      yr.add(ty(s.y[i]));
    }
  }
  if (xr.empty()) throw std::invalid_argument("plot: no finite points to draw");
  xr.pad();
  yr.pad();
  double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  if (spec.equal_aspect) {
    const double sx = pw / (xr.hi - xr.lo), sy = ph / (yr.hi - yr.lo);
    const double s = std::min(sx, sy);
    const double cx = 0.5 * (xr.lo + xr.hi), cy = 0.5 * (yr.lo + yr.hi);
    xr = {cx - 0.5 * pw / s, cx + 0.5 * pw / s};
    yr = {cy - 0.5 * ph / s, cy + 0.5 * ph / s};
  }
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (ty(y) - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(spec.title) + "</text>\n";
  out += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : ticks(xr.lo, xr.hi, 5)) {
    const double x = kLeft + (t - xr.lo) / (xr.hi - xr.lo) * pw;
    out += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
           num(kTop + ph + 5) + "\" stroke=\"#333\"/>\n";
    out += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" + tick_label(t) +
           "</text>\n";
  }
  for (double t : ticks(yr.lo, yr.hi, 5)) {
    const double y = kTop + ph - (t - yr.lo) / (yr.hi - yr.lo) * ph;
    out += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y) +
           "\" stroke=\"#333\"/>\n";
    out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
           tick_label(spec.log_y ? std::pow(10.0, t) : t) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 14) + "\" text-anchor=\"middle\">" +
         escape(spec.x_label) + "</text>\n";
  out += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num(kTop + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";

  std::size_t drawn = 0;
  for (const auto& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      pts += (pts.empty() ? "" : " ") + num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    if (pts.empty()) continue;
    const char* color = kColors[drawn % (sizeof(kColors) / sizeof(kColors[0]))];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"><title>" + escape(s.label) + "</title></polyline>\n";
    const double ly = kTop + 12 + 18.0 * static_cast<double>(drawn);
    out += "<line x1=\"" + num(kLeft + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(kLeft + pw + 32) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(kLeft + pw + 38) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.label) + "</text>\n";
    ++drawn;
  }
  out += "</svg>\n";
  return out;
}

std::string plot_run_record(const RunRecord& record, const std::string& kind) {
  auto column = [&](std::optional<double> RunRow::*field, const std::string& label) {
    Series s{label, {}, {}};
    for (const auto& row : record.rows()) {
      if (!(row.*field)) continue;
      s.x.push_back(static_cast<double>(row.step));
      s.y.push_back(*(row.*field));
    }
    return s;
  };
  std::vector<Series> series;
  ChartSpec spec;
  spec.x_label = "step";
  if (kind == "usage") {
    spec.title = "Codebook usage";
    spec.y_label = "usage";
    series = {column(&RunRow::usage_eval, "eval"), column(&RunRow::usage_window, "window")};
  } else if (kind == "lr") {
    spec.title = "Learning rate";
    spec.y_label = "lr";
    spec.log_y = true;
    Series s{"lr", {}, {}};
    for (const auto& row : record.rows()) {
      s.x.push_back(static_cast<double>(row.step));
      s.y.push_back(row.lr);
    }
    series = {s};
  } else if (kind == "loss") {
    spec.title = "Training losses";
    spec.y_label = "loss";
    spec.log_y = true;
    series = {column(&RunRow::loss_rec, "reconstruction"), column(&RunRow::loss_commit, "commitment"),
              column(&RunRow::eval_mse, "eval mse")};
  } else {
    throw std::invalid_argument("plot: unknown kind '" + kind + "' (expected usage, lr or loss)");
  }
  bool any = false;
  for (const auto& s : series) any = any || !s.x.empty();
  if (!any) throw std::invalid_argument("plot: the record has no " + kind + " values");
  return line_chart_svg(spec, series);
}

std::string plot_trajectory(const std::vector<TrajectoryPoint>& points) {
  if (points.empty()) throw std::invalid_argument("plot: empty trajectory");
  Series ze{"z_e", {}, {}}, zq{"z_q", {}, {}};
  for (const auto& p : points) {
    ze.x.push_back(p.ze_x);
    ze.y.push_back(p.ze_y);
    zq.x.push_back(p.zq_x);
    zq.y.push_back(p.zq_y);
  }
  ChartSpec spec{"Trajectory", "x", "y", false, true};
  return line_chart_svg(spec, {ze, zq});
}

}  // namespace fvq::tools
