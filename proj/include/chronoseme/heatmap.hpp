#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chronoseme/binning.hpp"
#include "chronoseme/common.hpp"
#include "chronoseme/stats.hpp"

namespace chronoseme {

struct HeatmapCell {
  std::optional<double> mean;  // absent when n == 0
  std::optional<double> sem;   // absent when n < 2
  std::size_t n = 0;
};

// Rows are months 1..12, or a single pooled row (month 0); columns are
// local hours 0..23.
struct HeatmapGrid {
  std::string statistic;
  bool pooled = false;
  std::vector<HeatmapCell> cells;

  static HeatmapGrid make(std::string statistic, bool pooled) {
    HeatmapGrid g;
    g.statistic = std::move(statistic);
    g.pooled = pooled;
    g.cells.resize(g.rows() * 24);
    return g;
  }

  std::size_t rows() const { return pooled ? 1 : 12; }
  int month_of_row(std::size_t row) const { return pooled ? 0 : static_cast<int>(row) + 1; }
  std::size_t row_of_month(int month) const { return pooled ? 0 : static_cast<std::size_t>(month - 1); }

  HeatmapCell& at(int month, int hour) { return cells[row_of_month(month) * 24 + static_cast<std::size_t>(hour)]; }
  const HeatmapCell& at(int month, int hour) const {
    return cells[row_of_month(month) * 24 + static_cast<std::size_t>(hour)];
  }

  std::size_t non_empty() const {
    std::size_t c = 0;
    for (const auto& cell : cells) c += cell.mean ? 1 : 0;
    return c;
  }

  // Hourly means of the pooled row (NaN where empty).
  std::vector<double> row_means(std::size_t row) const {
    std::vector<double> out(24, kNaN);
    for (std::size_t h = 0; h < 24; ++h) {
      if (const auto& m = cells[row * 24 + h].mean) out[h] = *m;
    }
    return out;
  }
};

enum class OutlierPolicy { kNone, kIqr };

inline OutlierPolicy parse_outlier_policy(std::string_view s) {
  if (s == "none") return OutlierPolicy::kNone;
  if (s == "iqr" || s == "iqr_1p5") return OutlierPolicy::kIqr;
  throw Error("unknown outlier policy '" + std::string(s) + "'");
}

inline std::string_view outlier_policy_name(OutlierPolicy p) { return p == OutlierPolicy::kIqr ? "iqr_1p5" : "none"; }

inline HeatmapCell summarize_cell(std::span<const double> values, OutlierPolicy policy) {
  std::vector<double> kept = policy == OutlierPolicy::kIqr ? iqr_filter(values) : std::vector<double>(values.begin(), values.end());
  HeatmapCell c;
  c.n = kept.size();
  if (c.n >= 1) c.mean = mean(kept);
  if (c.n >= 2) c.sem = sem(kept);
  return c;
}

struct Aggregation {
  HeatmapGrid grid;     // at the bin index's resolution
  HeatmapGrid profile;  // pooled across months per hour
};

// values[i] belongs to corpus row i; NaN marks values excluded upstream
// (skipped bins, duplicate-flagged rows). The pooled profile filters
// outliers over each hour's pooled values, not over monthly means.
inline Aggregation aggregate(std::span<const double> values, const BinIndex& bins, OutlierPolicy policy,
                             const std::string& statistic) {
  const bool pooled = bins.resolution == BinResolution::kHour;
  Aggregation out{HeatmapGrid::make(statistic, pooled), HeatmapGrid::make(statistic, true)};
  std::vector<std::vector<double>> per_hour(24);
  for (const auto& [key, rows] : bins.cells) {
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (auto r : rows) {
      if (!std::isnan(values[r])) vals.push_back(values[r]);
    }
    out.grid.at(key.month, key.hour) = summarize_cell(vals, policy);
    auto& ph = per_hour[static_cast<std::size_t>(key.hour)];
    ph.insert(ph.end(), vals.begin(), vals.end());
  }
  if (pooled) {
    out.profile = out.grid;
  } else {
    for (int h = 0; h < 24; ++h) out.profile.at(0, h) = summarize_cell(per_hour[static_cast<std::size_t>(h)], policy);
  }
  return out;
}

// (cell - mean) / sd over non-empty cells; SEMs scale by 1/sd.
inline HeatmapGrid zscore_grid(const HeatmapGrid& grid) {
  std::vector<double> vals;
  for (const auto& c : grid.cells) {
    if (c.mean) vals.push_back(*c.mean);
  }
  if (vals.size() < 2) throw DegenerateError("zscore_grid: need at least 2 non-empty cells");
  const double m = mean(vals);
  const double sd = sample_sd(vals);
  if (!(sd > 0.0)) throw DegenerateError("zscore_grid: zero spread across cells");
  HeatmapGrid out = grid;
  out.statistic = grid.statistic + "_z";
  for (auto& c : out.cells) {
    if (c.mean) c.mean = (*c.mean - m) / sd;
    if (c.sem) c.sem = *c.sem / sd;
  }
  return out;
}

}  // namespace chronoseme
