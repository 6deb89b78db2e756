#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chronoseme/common.hpp"
#include "chronoseme/cosinor.hpp"
#include "chronoseme/heatmap.hpp"
#include "chronoseme/scaling.hpp"
#include "chronoseme/solar.hpp"

namespace chronoseme {

// Minimal SVG writer. Coordinates are printed with two decimals so output
// is stable across platforms.
class SvgCanvas {
 public:
  static constexpr double kWidth = 640.0;
  static constexpr double kHeight = 420.0;
  static constexpr double kLeft = 70.0;
  static constexpr double kRight = 20.0;
  static constexpr double kTop = 40.0;
  static constexpr double kBottom = 50.0;

  SvgCanvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
    if (!(y1_ > y0_)) {
      y0_ -= 0.5;
      y1_ += 0.5;
    }
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * plot_w(); }
  double py(double y) const { return kTop + (1.0 - (y - y0_) / (y1_ - y0_)) * plot_h(); }
  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }

  static std::string num(double v) { return format_fixed(v, 2); }

  static std::string escape(std::string_view s) {
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

  void raw(const std::string& s) { body_ << s << '\n'; }

  void text(double x, double y, std::string_view s, std::string_view cls, std::string_view anchor = "middle") {
    body_ << "<text class=\"" << cls << "\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
          << "\">" << escape(s) << "</text>\n";
  }

  void line(double xa, double ya, double xb, double yb, std::string_view stroke, double width = 1.0) {
    body_ << "<line x1=\"" << num(xa) << "\" y1=\"" << num(ya) << "\" x2=\"" << num(xb) << "\" y2=\"" << num(yb)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }

  // Frame, ticks and labels. Tick labels come from `label(value)`.
  template <typename Fmt>
  void axes(std::string_view title, std::string_view xlabel, std::string_view ylabel, const std::vector<double>& xticks,
            const std::vector<double>& yticks, Fmt label) {
    body_ << "<rect class=\"frame\" x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w())
          << "\" height=\"" << num(plot_h()) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (double t : xticks) {
      line(px(t), kTop + plot_h(), px(t), kTop + plot_h() + 5, "#333");
      text(px(t), kTop + plot_h() + 18, label(t, true), "tick");
    }
    for (double t : yticks) {
      line(kLeft - 5, py(t), kLeft, py(t), "#333");
      text(kLeft - 8, py(t) + 4, label(t, false), "tick", "end");
    }
    text(kWidth / 2, 24, title, "title");
    text(kLeft + plot_w() / 2, kHeight - 10, xlabel, "xlabel");
    body_ << "<text class=\"ylabel\" x=\"16\" y=\"" << num(kTop + plot_h() / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
          << num(kTop + plot_h() / 2) << ")\">" << escape(ylabel) << "</text>\n";
  }

  std::string finish() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
        << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
};

inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(std::fabs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

inline std::string tick_label(double v) {
  const double a = std::fabs(v);
  if (a == 0.0) return "0";
  if (a >= 100) return format_fixed(v, 0);
  if (a >= 1) return format_fixed(v, 1);
  return format_fixed(v, 3);
}

// Hourly profile: one errorbar glyph per populated hour (mean +- SEM) and,
// when given, the fitted cosinor curve as a single path.
inline std::string profile_svg(std::string_view title, const HeatmapGrid& profile, const std::optional<CosinorFit>& fit) {
  double lo = INFINITY, hi = -INFINITY;
  for (int h = 0; h < 24; ++h) {
    const auto& c = profile.at(0, h);
    if (!c.mean) continue;
    const double s = c.sem.value_or(0.0);
    lo = std::min(lo, *c.mean - s);
    hi = std::max(hi, *c.mean + s);
  }
  if (fit) {
    for (int i = 0; i <= 96; ++i) {
      const double v = fit->predict(i * 0.25);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0;
    hi = 1;
  }
  const double pad = 0.08 * std::max(hi - lo, 1e-9);
  SvgCanvas cv(-0.5, 23.5, lo - pad, hi + pad);
  cv.axes(title, "local hour", profile.statistic, {0, 3, 6, 9, 12, 15, 18, 21}, nice_ticks(lo - pad, hi + pad),
          [](double v, bool x) { return x ? format_fixed(v, 0) : tick_label(v); });
  for (int h = 0; h < 24; ++h) {
    const auto& c = profile.at(0, h);
    if (!c.mean) continue;
    const double s = c.sem.value_or(0.0);
    const double x = cv.px(h);
    std::ostringstream g;
    g << "<g class=\"errorbar\" data-hour=\"" << h << "\">"
      << "<line x1=\"" << SvgCanvas::num(x) << "\" y1=\"" << SvgCanvas::num(cv.py(*c.mean - s)) << "\" x2=\""
      << SvgCanvas::num(x) << "\" y2=\"" << SvgCanvas::num(cv.py(*c.mean + s)) << "\" stroke=\"#1f4e9c\"/>"
      << "<circle cx=\"" << SvgCanvas::num(x) << "\" cy=\"" << SvgCanvas::num(cv.py(*c.mean))
      << "\" r=\"3\" fill=\"#1f4e9c\"/></g>";
    cv.raw(g.str());
  }
  if (fit) {
    std::ostringstream d;
    for (int i = 0; i <= 92; ++i) {
      const double t = -0.5 + i * 0.25;
      d << (i == 0 ? 'M' : 'L') << SvgCanvas::num(cv.px(t)) << ',' << SvgCanvas::num(cv.py(fit->predict(t))) << ' ';
    }
    std::string path = d.str();
    path.pop_back();
    cv.raw("<path class=\"cosinor\" d=\"" + path + "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>");
    cv.text(SvgCanvas::kLeft + SvgCanvas::plot_w() - 4, SvgCanvas::kTop + 14,
            "A=" + format_fixed(fit->amplitude, 4) + " phi=" + format_fixed(fit->acrophase_h, 2) + "h r2=" +
                format_fixed(fit->r2, 3),
            "fit-label", "end");
  }
  return cv.finish();
}

// Sequential blue-to-yellow ramp on [0, 1].
inline std::string ramp_color(double f) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  f = std::clamp(f, 0.0, 1.0) * 4.0;
  const auto i = static_cast<std::size_t>(std::min(3.0, std::floor(f)));
  const double t = f - static_cast<double>(i);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[i][0] + t * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + t * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + t * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

// Month x hour heatmap; with solar data, an up-triangle marks sunrise and
// a down-triangle sunset in each month row.
inline std::string heatmap_svg(std::string_view title, const HeatmapGrid& grid, const std::vector<MonthlySolar>& solar = {}) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : grid.cells) {
    if (!c.mean) continue;
    lo = std::min(lo, *c.mean);
    hi = std::max(hi, *c.mean);
  }
  const auto rows = static_cast<double>(grid.rows());
  SvgCanvas cv(0, 24, 0, rows);
  cv.axes(title, "local hour", grid.pooled ? "" : "month", {0, 3, 6, 9, 12, 15, 18, 21, 24}, {},
          [](double v, bool) { return format_fixed(v, 0); });
  const double cw = SvgCanvas::plot_w() / 24.0;
  const double ch = SvgCanvas::plot_h() / rows;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const int month = grid.month_of_row(r);
    const double y = SvgCanvas::kTop + static_cast<double>(r) * ch;
    cv.text(SvgCanvas::kLeft - 8, y + ch / 2 + 4, month == 0 ? "all" : std::to_string(month), "tick", "end");
    for (int h = 0; h < 24; ++h) {
      const auto& c = grid.at(month, h);
      const std::string fill =
          c.mean ? ramp_color(hi > lo ? (*c.mean - lo) / (hi - lo) : 0.5) : std::string("#dddddd");
      cv.raw("<rect class=\"cell\" x=\"" + SvgCanvas::num(cv.px(h)) + "\" y=\"" + SvgCanvas::num(y) + "\" width=\"" +
             SvgCanvas::num(cw) + "\" height=\"" + SvgCanvas::num(ch) + "\" fill=\"" + fill + "\"/>");
    }
  }
  const double s = std::min(ch, cw) * 0.35;
  for (const auto& m : solar) {
    if (grid.pooled || std::isnan(m.sunrise_mean) || std::isnan(m.sunset_mean)) continue;
    const double yc = SvgCanvas::kTop + static_cast<double>(grid.row_of_month(static_cast<int>(m.month))) * ch + ch / 2;
    const double xr = cv.px(m.sunrise_mean), xs = cv.px(m.sunset_mean);
    cv.raw("<polygon class=\"sunrise\" points=\"" + SvgCanvas::num(xr - s) + ',' + SvgCanvas::num(yc + s) + ' ' +
           SvgCanvas::num(xr + s) + ',' + SvgCanvas::num(yc + s) + ' ' + SvgCanvas::num(xr) + ',' +
           SvgCanvas::num(yc - s) + "\" fill=\"white\" stroke=\"black\"/>");
    cv.raw("<polygon class=\"sunset\" points=\"" + SvgCanvas::num(xs - s) + ',' + SvgCanvas::num(yc - s) + ' ' +
           SvgCanvas::num(xs + s) + ',' + SvgCanvas::num(yc - s) + ' ' + SvgCanvas::num(xs) + ',' +
           SvgCanvas::num(yc + s) + "\" fill=\"black\" stroke=\"white\"/>");
  }
  if (std::isfinite(lo)) {
    cv.text(SvgCanvas::kWidth - SvgCanvas::kRight, 24, "range " + tick_label(lo) + " .. " + tick_label(hi), "legend", "end");
  }
  return cv.finish();
}

struct FitLine {
  double slope = 0.0;
  double intercept = 0.0;  // in natural-log space
  double x_lo = 1.0;
  double x_hi = 10.0;
  std::string name;
};

// Log-log scatter (natural-log fits drawn over their x range), each fit
// annotated "slope=<value to 2 decimals>".
inline std::string loglog_svg(std::string_view title, std::string_view xlabel, std::string_view ylabel,
                              const std::vector<double>& xs, const std::vector<double>& ys, const std::vector<FitLine>& fits) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] > 0 && ys[i] > 0) {
      lx.push_back(std::log10(xs[i]));
      ly.push_back(std::log10(ys[i]));
    }
  }
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!lx.empty()) {
    x0 = *std::min_element(lx.begin(), lx.end());
    x1 = *std::max_element(lx.begin(), lx.end());
    y0 = *std::min_element(ly.begin(), ly.end());
    y1 = *std::max_element(ly.begin(), ly.end());
  }
  const double px_pad = 0.05 * std::max(x1 - x0, 0.1), py_pad = 0.05 * std::max(y1 - y0, 0.1);
  SvgCanvas cv(x0 - px_pad, x1 + px_pad, y0 - py_pad, y1 + py_pad);
  auto decade = [](double v, bool) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(v)));
    return std::string(buf);
  };
  std::vector<double> xt, yt;
  for (double t = std::ceil(x0 - px_pad); t <= x1 + px_pad; t += 1) xt.push_back(t);
  for (double t = std::ceil(y0 - py_pad); t <= y1 + py_pad; t += 1) yt.push_back(t);
  cv.axes(title, xlabel, ylabel, xt, yt, decade);
  for (std::size_t i = 0; i < lx.size(); ++i) {
    cv.raw("<circle class=\"point\" cx=\"" + SvgCanvas::num(cv.px(lx[i])) + "\" cy=\"" + SvgCanvas::num(cv.py(ly[i])) +
           "\" r=\"2.5\" fill=\"#1f4e9c\"/>");
  }
  static constexpr std::array<const char*, 4> colors{"#c0392b", "#27ae60", "#8e44ad", "#d35400"};
  for (std::size_t f = 0; f < fits.size(); ++f) {
    const auto& fl = fits[f];
    if (!(fl.x_lo > 0 && fl.x_hi > 0)) continue;
    auto yv = [&](double x) { return (fl.intercept + fl.slope * std::log(x)) / std::log(10.0); };
    const char* color = colors[f % colors.size()];
    cv.raw("<line class=\"fit\" x1=\"" + SvgCanvas::num(cv.px(std::log10(fl.x_lo))) + "\" y1=\"" +
           SvgCanvas::num(cv.py(yv(fl.x_lo))) + "\" x2=\"" + SvgCanvas::num(cv.px(std::log10(fl.x_hi))) + "\" y2=\"" +
           SvgCanvas::num(cv.py(yv(fl.x_hi))) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>");
    std::string label = "slope=" + format_fixed(fl.slope, 2);
    if (!fl.name.empty()) label = fl.name + " " + label;
    cv.text(SvgCanvas::kLeft + SvgCanvas::plot_w() - 4, SvgCanvas::kTop + 14 + 14 * static_cast<double>(f), label,
            "fit-label", "end");
  }
  return cv.finish();
}

inline constexpr std::array<const char*, 10> kClusterPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

// 2-D projection colored by cluster label (noise in light grey).
inline std::string scatter_svg(std::string_view title, const PcaProjection& p, std::span<const int> labels,
                               std::size_t max_points = 5000) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t i = 0; i < p.n; ++i) {
    x0 = std::min(x0, p.coords[i * p.dims]);
    x1 = std::max(x1, p.coords[i * p.dims]);
    y0 = std::min(y0, p.coords[i * p.dims + 1]);
    y1 = std::max(y1, p.coords[i * p.dims + 1]);
  }
  if (p.n == 0) x0 = y0 = 0, x1 = y1 = 1;
  SvgCanvas cv(x0, x1, y0, y1);
  cv.axes(title, "PC1", "PC2", nice_ticks(x0, x1), nice_ticks(y0, y1), [](double v, bool) { return tick_label(v); });
  const std::size_t stride = std::max<std::size_t>(1, (p.n + max_points - 1) / max_points);
  for (std::size_t i = 0; i < p.n; i += stride) {
    const int l = i < labels.size() ? labels[i] : kNoise;
    const char* fill = l < 0 ? "#cccccc" : kClusterPalette[static_cast<std::size_t>(l) % kClusterPalette.size()];
    cv.raw("<circle cx=\"" + SvgCanvas::num(cv.px(p.coords[i * p.dims])) + "\" cy=\"" +
           SvgCanvas::num(cv.py(p.coords[i * p.dims + 1])) + "\" r=\"1.5\" fill=\"" + fill + "\"/>");
  }
  return cv.finish();
}

// Cumulative size by local hour for the largest clusters.
inline std::string growth_svg(std::string_view title, const ClusterTrace& trace, std::size_t top = 10) {
  std::vector<std::size_t> order(trace.sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return trace.sizes[a] > trace.sizes[b]; });
  if (order.size() > top) order.resize(top);
  double hi = 1;
  for (auto c : order) hi = std::max(hi, static_cast<double>(trace.growth[c][23]));
  SvgCanvas cv(0, 23, 0, hi * 1.05);
  cv.axes(title, "local hour", "cumulative posts", {0, 3, 6, 9, 12, 15, 18, 21}, nice_ticks(0, hi * 1.05),
          [](double v, bool x) { return x ? format_fixed(v, 0) : tick_label(v); });
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::ostringstream d;
    for (int h = 0; h < 24; ++h) {
      d << (h == 0 ? 'M' : 'L') << SvgCanvas::num(cv.px(h)) << ','
        << SvgCanvas::num(cv.py(static_cast<double>(trace.growth[order[k]][static_cast<std::size_t>(h)]))) << ' ';
    }
    std::string path = d.str();
    path.pop_back();
    cv.raw("<path class=\"growth\" d=\"" + path + "\" fill=\"none\" stroke=\"" +
           kClusterPalette[k % kClusterPalette.size()] + "\" stroke-width=\"1.5\"/>");
  }
  return cv.finish();
}

}  // namespace chronoseme
