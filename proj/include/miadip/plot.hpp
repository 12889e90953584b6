// Copyright 2026 The miadip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal SVG line and bar charts for sweep summaries.

#ifndef MIADIP_PLOT_HPP_
#define MIADIP_PLOT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "miadip/eval.hpp"

namespace miadip {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per bar series
};

namespace plot_internal {

inline constexpr const char* kPalette[] = {"#1f5fbf", "#2e9e44", "#d9822b", "#b03a8c",
                                           "#6b6b6b", "#c23b3b"};
inline constexpr double kWidth = 480, kHeight = 320, kLeft = 56, kRight = 120, kTop = 32,
                        kBottom = 44;

inline std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string Escape(const std::string& s) {
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

inline std::string Header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + Num(kWidth) + "\" height=\"" +
         Num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + Num(kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
         Escape(title) + "</text>\n";
}

// Frame, y ticks at 0, 0.25, ..., 1 scaled to [y_lo, y_hi], and axis labels.
inline std::string Axes(const std::string& x_label, const std::string& y_label, double y_lo,
                        double y_hi) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s = "<rect x=\"" + Num(x0) + "\" y=\"" + Num(y1) + "\" width=\"" + Num(x1 - x0) +
                  "\" height=\"" + Num(y0 - y1) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    s += "<line x1=\"" + Num(x0 - 4) + "\" y1=\"" + Num(y) + "\" x2=\"" + Num(x0) + "\" y2=\"" +
         Num(y) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + Num(x0 - 6) + "\" y=\"" + Num(y + 4) + "\" text-anchor=\"end\">" +
         Num(v) + "</text>\n";
  }
  s += "<text x=\"" + Num((x0 + x1) / 2) + "\" y=\"" + Num(kHeight - 8) +
       "\" text-anchor=\"middle\">" + Escape(x_label) + "</text>\n";
  s += "<text transform=\"translate(14," + Num((y0 + y1) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + Escape(y_label) + "</text>\n";
  return s;
}

inline std::string Legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 12 + 16.0 * static_cast<double>(i);
    const char* color = kPalette[i % std::size(kPalette)];
    s += "<rect x=\"" + Num(kWidth - kRight + 10) + "\" y=\"" + Num(y - 8) +
         "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    s += "<text x=\"" + Num(kWidth - kRight + 24) + "\" y=\"" + Num(y + 1) + "\">" +
         Escape(names[i]) + "</text>\n";
  }
  return s;
}

}  // namespace plot_internal

// y values are expected in [0, 1]; NaN points are skipped.
inline std::string LinePlotSvg(const std::string& title, const std::string& x_label,
                               const std::string& y_label, const std::vector<Series>& series) {
  using namespace plot_internal;
  double x_lo = INFINITY, x_hi = -INFINITY;
  for (const Series& s : series) {
    for (double x : s.x) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
    }
  }
  if (!(x_lo < x_hi)) {
    x_lo = std::isfinite(x_lo) ? x_lo - 0.5 : 0.0;
    x_hi = x_lo + 1.0;
  }
  const double px0 = kLeft, px1 = kWidth - kRight, py0 = kHeight - kBottom, py1 = kTop;
  auto px = [&](double x) { return px0 + (px1 - px0) * (x - x_lo) / (x_hi - x_lo); };
  auto py = [&](double y) { return py0 - (py0 - py1) * std::clamp(y, 0.0, 1.0); };

  std::string svg = Header(title) + Axes(x_label, y_label, 0.0, 1.0);
  std::vector<double> ticks;
  for (const Series& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    svg += "<text x=\"" + Num(px(t)) + "\" y=\"" + Num(py0 + 14) + "\" text-anchor=\"middle\">" +
           Num(t) + "</text>\n";
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    names.push_back(s.name);
    std::string points;
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (std::isnan(s.y[k])) continue;
      points += Num(px(s.x[k])) + "," + Num(py(s.y[k])) + " ";
      svg += "<circle cx=\"" + Num(px(s.x[k])) + "\" cy=\"" + Num(py(s.y[k])) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    if (!points.empty()) points.pop_back();
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
  }
  return svg + Legend(names) + "</svg>\n";
}

inline std::string BarPlotSvg(const std::string& title, const std::string& y_label,
                              const std::vector<std::string>& bar_names,
                              const std::vector<BarGroup>& groups) {
  using namespace plot_internal;
  const double px0 = kLeft, px1 = kWidth - kRight, py0 = kHeight - kBottom, py1 = kTop;
  std::string svg = Header(title) + Axes("", y_label, 0.0, 1.0);
  const double group_w = (px1 - px0) / static_cast<double>(std::max<std::size_t>(groups.size(), 1));
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(bar_names.size(), 1));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = px0 + group_w * static_cast<double>(g) + 0.1 * group_w;
    for (std::size_t b = 0; b < groups[g].values.size() && b < bar_names.size(); ++b) {
      const double v = groups[g].values[b];
      if (std::isnan(v)) continue;
      const double h = (py0 - py1) * std::clamp(v, 0.0, 1.0);
      svg += "<rect x=\"" + Num(gx + bar_w * static_cast<double>(b)) + "\" y=\"" + Num(py0 - h) +
             "\" width=\"" + Num(bar_w) + "\" height=\"" + Num(h) + "\" fill=\"" +
             kPalette[b % std::size(kPalette)] + "\"/>\n";
    }
    svg += "<text x=\"" + Num(gx + 0.4 * group_w) + "\" y=\"" + Num(py0 + 14) +
           "\" text-anchor=\"middle\">" + Escape(groups[g].label) + "</text>\n";
  }
  return svg + Legend(bar_names) + "</svg>\n";
}

// Plots for a sweep summary: ASR and ACC against the M fraction (transfer
// rows) and against sigma, plus grouped bars per summary row.
struct SweepPlots {
  std::string asr_vs_m;
  std::string acc_vs_m;
  std::string asr_vs_sigma;
  std::string bars;
};

inline SweepPlots PlotSummary(const std::vector<SummaryRow>& rows) {
  auto metric_series = [&](auto&& key, auto&& include, auto&& x_of, const std::string& prefix,
                           auto&& group_of) {
    std::vector<Series> out;
    for (const SummaryRow& r : rows) {
      if (!include(r)) continue;
      const std::string name = prefix + group_of(r);
      auto it = std::find_if(out.begin(), out.end(), [&](const Series& s) { return s.name == name; });
      if (it == out.end()) {
        out.push_back(Series{name, {}, {}});
        it = out.end() - 1;
      }
      it->x.push_back(x_of(r));
      it->y.push_back(key(r));
    }
    return out;
  };
  auto tl = [](const SummaryRow& r) { return r.variant == "tl"; };
  auto any = [](const SummaryRow&) { return true; };
  auto by_m = [](const SummaryRow& r) { return r.m_frac; };
  auto by_sigma = [](const SummaryRow& r) { return r.sigma; };
  auto n_group = [](const SummaryRow& r) { return " N=" + std::to_string(r.n); };
  auto variant_group = [](const SummaryRow& r) {
    return r.variant + (r.variant == "tl" ? " M=" + plot_internal::Num(r.m_frac) : "") +
           " N=" + std::to_string(r.n);
  };
  auto bim = [](const SummaryRow& r) { return r.asr_bim; };
  auto hsj = [](const SummaryRow& r) { return r.asr_hsj; };
  auto acc = [](const SummaryRow& r) { return r.acc; };

  std::vector<Series> asr_m = metric_series(bim, tl, by_m, "bim", n_group);
  for (Series& s : metric_series(hsj, tl, by_m, "hsj", n_group)) asr_m.push_back(std::move(s));
  std::vector<Series> asr_sigma = metric_series(bim, any, by_sigma, "bim ", variant_group);

  std::vector<BarGroup> groups;
  for (const SummaryRow& r : rows) {
    groups.push_back(BarGroup{variant_group(r), {r.asr_bim, r.asr_hsj, r.acc}});
  }
  SweepPlots plots;
  plots.asr_vs_m = LinePlotSvg("ASR vs frozen fraction", "M fraction", "ASR", asr_m);
  plots.acc_vs_m = LinePlotSvg("ACC vs frozen fraction", "M fraction", "ACC",
                               metric_series(acc, tl, by_m, "acc", n_group));
  plots.asr_vs_sigma = LinePlotSvg("ASR vs sigma", "sigma (feature std units)", "ASR", asr_sigma);
  plots.bars = BarPlotSvg("ASR and ACC by configuration", "rate", {"ASR bim", "ASR hsj", "ACC"},
                          groups);
  return plots;
}

}  // namespace miadip

#endif  // MIADIP_PLOT_HPP_
