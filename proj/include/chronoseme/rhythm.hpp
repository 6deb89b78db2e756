#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chronoseme/heatmap.hpp"
#include "chronoseme/solar.hpp"
#include "chronoseme/stats.hpp"

namespace chronoseme {

// Half-open hour window [start, end); start > end wraps past midnight.
struct HourWindow {
  int start = 0;
  int end = 12;

  std::vector<int> hours() const {
    const int s = ((start % 24) + 24) % 24;
    const int e = ((end % 24) + 24) % 24;
    int len = (e - s + 24) % 24;
    if (len == 0 && start != end) len = 24;
    std::vector<int> h;
    for (int i = 0; i < len; ++i) h.push_back((s + i) % 24);
    return h;
  }
  bool contains(int hour) const {
    const auto hs = hours();
    return std::find(hs.begin(), hs.end(), hour) != hs.end();
  }
};

struct PeakTroughRow {
  int month = 0;
  int peak_hour = 0;
  int trough_hour = 0;
  double peak_value = kNaN;
  double trough_value = kNaN;
};

struct PeakTroughTable {
  HourWindow peak_window{0, 12};
  HourWindow trough_window{12, 24};
  std::vector<PeakTroughRow> rows;
};

// Per month: argmax of cell means in the peak window, argmin in the trough
// window. Ties go to the hour that comes first in the window; months with an
// empty window are omitted.
inline PeakTroughTable extract_peak_trough(const HeatmapGrid& grid, HourWindow peak_window = {0, 12},
                                           HourWindow trough_window = {12, 24}) {
  PeakTroughTable t;
  t.peak_window = peak_window;
  t.trough_window = trough_window;
  for (std::size_t row = 0; row < grid.rows(); ++row) {
    const int month = grid.month_of_row(row);
    std::optional<int> peak, trough;
    double best_peak = -INFINITY, best_trough = INFINITY;
    for (int h : peak_window.hours()) {
      const auto& c = grid.at(month, h % 24);
      if (c.mean && *c.mean > best_peak) {
        best_peak = *c.mean;
        peak = h % 24;
      }
    }
    for (int h : trough_window.hours()) {
      const auto& c = grid.at(month, h % 24);
      if (c.mean && *c.mean < best_trough) {
        best_trough = *c.mean;
        trough = h % 24;
      }
    }
    if (!peak || !trough) continue;
    t.rows.push_back({month, *peak, *trough, best_peak, best_trough});
  }
  return t;
}

struct SeasonalCorrelation {
  CorrelationResult sunrise_vs_peak;
  CorrelationResult sunset_vs_trough;
  std::vector<int> months;
};

inline SeasonalCorrelation seasonal_correlation(const PeakTroughTable& table, const std::vector<MonthlySolar>& solar) {
  std::vector<double> rise, peak, set, trough;
  SeasonalCorrelation out;
  for (const auto& row : table.rows) {
    auto it = std::find_if(solar.begin(), solar.end(),
                           [&](const MonthlySolar& s) { return static_cast<int>(s.month) == row.month; });
    if (it == solar.end() || std::isnan(it->sunrise_mean) || std::isnan(it->sunset_mean)) continue;
    rise.push_back(it->sunrise_mean);
    set.push_back(it->sunset_mean);
    peak.push_back(row.peak_hour);
    trough.push_back(row.trough_hour);
    out.months.push_back(row.month);
  }
  if (out.months.size() < 3) throw DegenerateError("seasonal_correlation: need at least 3 months with solar data");
  out.sunrise_vs_peak = pearson(rise, peak);
  out.sunset_vs_trough = pearson(set, trough);
  return out;
}

// Pearson over cells where both grids have a mean.
inline CorrelationResult grid_correlation(const HeatmapGrid& a, const HeatmapGrid& b) {
  if (a.pooled != b.pooled || a.cells.size() != b.cells.size()) throw Error("grid_correlation: shape mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    if (a.cells[i].mean && b.cells[i].mean) {
      x.push_back(*a.cells[i].mean);
      y.push_back(*b.cells[i].mean);
    }
  }
  return pearson(x, y);
}

struct ReferencePoint {
  double hour = 0.0;
  double value = 0.0;
};

// hour,value CSV; a non-numeric first line is treated as a header.
inline std::vector<ReferencePoint> read_reference_csv(std::istream& in) {
  std::vector<ReferencePoint> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto parts = split(line, ',');
    if (parts.size() < 2) throw FormatError("reference csv line " + std::to_string(line_no) + ": expected hour,value");
    try {
      std::size_t used = 0;
      const double h = std::stod(parts[0], &used);
      const double v = std::stod(parts[1]);
      pts.push_back({h, v});
    } catch (const std::exception&) {
      if (line_no == 1 && pts.empty()) continue;
      throw FormatError("reference csv line " + std::to_string(line_no) + ": not numeric");
    }
  }
  return pts;
}

inline std::vector<ReferencePoint> read_reference_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read reference csv " + path.string());
  return read_reference_csv(in);
}

// Reference resampled at integer hours 0..23 by linear interpolation
// between neighboring points; no extrapolation (NaN outside the range).
inline std::vector<double> resample_reference(std::vector<ReferencePoint> ref) {
  std::sort(ref.begin(), ref.end(), [](const auto& a, const auto& b) { return a.hour < b.hour; });
  std::vector<double> out(24, kNaN);
  for (int h = 0; h < 24; ++h) {
    const double x = h;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (ref[i].hour == x) {
        out[static_cast<std::size_t>(h)] = ref[i].value;
        break;
      }
      if (i + 1 < ref.size() && ref[i].hour < x && x < ref[i + 1].hour) {
        const double f = (x - ref[i].hour) / (ref[i + 1].hour - ref[i].hour);
        out[static_cast<std::size_t>(h)] = ref[i].value + f * (ref[i + 1].value - ref[i].value);
        break;
      }
    }
  }
  return out;
}

inline CorrelationResult compare_external(std::span<const double> profile, const std::vector<ReferencePoint>& reference) {
  if (profile.size() != 24) throw Error("compare_external: profile must have 24 hourly values");
  const auto ref = resample_reference(reference);
  std::vector<double> x, y;
  for (std::size_t h = 0; h < 24; ++h) {
    if (!std::isnan(profile[h]) && !std::isnan(ref[h])) {
      x.push_back(profile[h]);
      y.push_back(ref[h]);
    }
  }
  if (x.size() < 3) throw DegenerateError("compare_external: fewer than 3 overlapping hours");
  return pearson(x, y);
}

}  // namespace chronoseme
