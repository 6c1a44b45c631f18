/*
 * Copyright 2026 The Metaclip Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "metaclip/cli/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "metaclip/errors.hpp"

namespace metaclip::cli {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 200;
constexpr double kTop = 30;
constexpr double kBottom = 50;

constexpr std::array<const char*, 8> kPalette = {
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string Tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string RenderSvg(const std::vector<Series>& series) {
  if (series.empty()) throw ConfigError("plot needs at least one series");
  bool use_accuracy = true;
  for (const auto& s : series) {
    if (s.records.empty()) throw DataError("series '" + s.label + "' is empty");
    for (const auto& r : s.records) use_accuracy = use_accuracy && r.accuracy;
  }
  auto y_of = [&](const MetricsRecord& r) {
    return use_accuracy ? *r.accuracy : r.loss;
  };

  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = x_min;
  double y_max = -x_min;
  for (const auto& s : series) {
    for (const auto& r : s.records) {
      const double y = y_of(r);
      if (!std::isfinite(y)) continue;
      x_min = std::min(x_min, double(r.iter));
      x_max = std::max(x_max, double(r.iter));
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (!std::isfinite(x_min)) throw DataError("no finite values to plot");
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) {
    return kTop + plot_h - (y - y_min) / (y_max - y_min) * plot_h;
  };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + Fmt(kWidth) +
         "\" height=\"" + Fmt(kHeight) + "\" viewBox=\"0 0 " + Fmt(kWidth) +
         " " + Fmt(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes and ticks.
  svg += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  svg += "<line x1=\"" + Fmt(kLeft) + "\" y1=\"" + Fmt(kTop + plot_h) +
         "\" x2=\"" + Fmt(kLeft + plot_w) + "\" y2=\"" + Fmt(kTop + plot_h) +
         "\"/>\n";
  svg += "<line x1=\"" + Fmt(kLeft) + "\" y1=\"" + Fmt(kTop) + "\" x2=\"" +
         Fmt(kLeft) + "\" y2=\"" + Fmt(kTop + plot_h) + "\"/>\n";
  svg += "</g>\n";
  svg += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_min + (x_max - x_min) * i / 4.0;
    const double fy = y_min + (y_max - y_min) * i / 4.0;
    svg += "<text x=\"" + Fmt(px(fx)) + "\" y=\"" + Fmt(kTop + plot_h + 16) +
           "\" text-anchor=\"middle\">" + Tick(fx) + "</text>\n";
    svg += "<text x=\"" + Fmt(kLeft - 6) + "\" y=\"" + Fmt(py(fy) + 4) +
           "\" text-anchor=\"end\">" + Tick(fy) + "</text>\n";
  }
  svg += "<text x=\"" + Fmt(kLeft + plot_w / 2) + "\" y=\"" +
         Fmt(kHeight - 12) + "\" text-anchor=\"middle\">iteration</text>\n";
  svg += "<text x=\"16\" y=\"" + Fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         Fmt(kTop + plot_h / 2) + ")\">" +
         (use_accuracy ? "accuracy" : "loss") + "</text>\n";
  svg += "</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPalette.size()];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& r : series[i].records) {
      const double y = y_of(r);
      if (!std::isfinite(y)) continue;
      if (!first) svg += ' ';
      svg += Fmt(px(double(r.iter))) + "," + Fmt(py(y));
      first = false;
    }
    svg += "\"/>\n";
    const double ly = kTop + 14 + 18 * double(i);
    const double lx = kLeft + plot_w + 16;
    svg += "<line x1=\"" + Fmt(lx) + "\" y1=\"" + Fmt(ly - 4) + "\" x2=\"" +
           Fmt(lx + 20) + "\" y2=\"" + Fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + Fmt(lx + 26) + "\" y=\"" + Fmt(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           Escape(series[i].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace metaclip::cli
