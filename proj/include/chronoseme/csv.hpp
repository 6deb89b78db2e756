#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "chronoseme/common.hpp"
#include "chronoseme/cosinor.hpp"
#include "chronoseme/heatmap.hpp"
#include "chronoseme/stats.hpp"

namespace chronoseme {

inline constexpr const char* kEntropyCsvHeader = "country,month,hour,stat,mean,sem,n";
inline constexpr const char* kCosinorCsvHeader = "group,amplitude,acrophase_h,r2,p_lr,p_fdr";
inline constexpr const char* kHeatmapCsvHeader = "month,hour,mean,sem,n";

// One cell of one statistic for one group; month 0 is the pooled profile.
struct EntropyRow {
  std::string group;
  int month = 0;
  int hour = 0;
  std::string stat;
  std::optional<double> mean;
  std::optional<double> sem;
  std::size_t n = 0;
};

inline std::string csv_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::vector<EntropyRow> rows_from_grid(const std::string& group, const HeatmapGrid& grid) {
  std::vector<EntropyRow> rows;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const int month = grid.month_of_row(r);
    for (int h = 0; h < 24; ++h) {
      const auto& c = grid.at(month, h);
      rows.push_back({group, month, h, grid.statistic, c.mean, c.sem, c.n});
    }
  }
  return rows;
}

inline void write_entropy_csv(std::ostream& out, const std::vector<EntropyRow>& rows) {
  out << kEntropyCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.group << ',' << r.month << ',' << r.hour << ',' << r.stat << ',' << csv_optional(r.mean) << ','
        << csv_optional(r.sem) << ',' << r.n << '\n';
  }
}

namespace detail {

inline std::optional<double> parse_optional(const std::string& s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

inline long parse_integer(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("csv line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  }
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline std::vector<EntropyRow> read_entropy_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kEntropyCsvHeader) {
    throw FormatError(std::string("entropy csv: expected header '") + kEntropyCsvHeader + "'");
  }
  std::vector<EntropyRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw FormatError("entropy csv line " + std::to_string(line_no) + ": expected 7 fields");
    EntropyRow r;
    r.group = f[0];
    r.month = static_cast<int>(detail::parse_integer(f[1], line_no));
    r.hour = static_cast<int>(detail::parse_integer(f[2], line_no));
    r.stat = f[3];
    r.mean = detail::parse_optional(f[4], line_no);
    r.sem = detail::parse_optional(f[5], line_no);
    const long n = detail::parse_integer(f[6], line_no);
    if (r.month < 0 || r.month > 12 || r.hour < 0 || r.hour > 23 || n < 0) {
      throw FormatError("entropy csv line " + std::to_string(line_no) + ": field out of range");
    }
    r.n = static_cast<std::size_t>(n);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<EntropyRow> read_entropy_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return read_entropy_csv(in);
}

inline std::set<std::string> groups_in(const std::vector<EntropyRow>& rows) {
  std::set<std::string> g;
  for (const auto& r : rows) g.insert(r.group);
  return g;
}

// Grid of one (group, stat) at pooled (month 0) or monthly resolution.
// Returns nullopt when the table holds no such rows.
inline std::optional<HeatmapGrid> grid_from_rows(const std::vector<EntropyRow>& rows, const std::string& group,
                                                 const std::string& stat, bool pooled) {
  HeatmapGrid g = HeatmapGrid::make(stat, pooled);
  bool any = false;
  for (const auto& r : rows) {
    if (r.group != group || r.stat != stat || (r.month == 0) != pooled) continue;
    auto& c = g.at(r.month, r.hour);
    c.mean = r.mean;
    c.sem = r.sem;
    c.n = r.n;
    any = true;
  }
  if (!any) return std::nullopt;
  return g;
}

inline void write_heatmap_csv(std::ostream& out, const HeatmapGrid& grid) {
  out << kHeatmapCsvHeader << '\n';
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const int month = grid.month_of_row(r);
    for (int h = 0; h < 24; ++h) {
      const auto& c = grid.at(month, h);
      out << month << ',' << h << ',' << csv_optional(c.mean) << ',' << csv_optional(c.sem) << ',' << c.n << '\n';
    }
  }
}

struct CosinorRow {
  std::string group;
  CosinorFit fit;
};

inline void write_cosinor_csv(std::ostream& out, const std::vector<CosinorRow>& rows) {
  out << kCosinorCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.group << ',' << format_double(r.fit.amplitude) << ',' << format_double(r.fit.acrophase_h) << ','
        << format_double(r.fit.r2) << ',' << format_double(r.fit.p_lr) << ',' << format_double(r.fit.p_fdr) << '\n';
  }
}

inline std::vector<CosinorRow> read_cosinor_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kCosinorCsvHeader) {
    throw FormatError(std::string("cosinor csv: expected header '") + kCosinorCsvHeader + "'");
  }
  std::vector<CosinorRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError("cosinor csv line " + std::to_string(line_no) + ": expected 6 fields");
    CosinorRow r;
    r.group = f[0];
    auto num = [&](const std::string& s) { return detail::parse_optional(s, line_no).value_or(kNaN); };
    r.fit.amplitude = num(f[1]);
    r.fit.acrophase_h = num(f[2]);
    r.fit.r2 = num(f[3]);
    r.fit.p_lr = num(f[4]);
    r.fit.p_fdr = num(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<CosinorRow> read_cosinor_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  return read_cosinor_csv(in);
}

// Cosinor fit of the hourly means of a pooled profile (empty hours skipped).
inline CosinorFit fit_profile(const HeatmapGrid& profile) {
  if (!profile.pooled) throw Error("fit_profile: expected a pooled hourly profile");
  std::vector<double> t, y;
  for (int h = 0; h < 24; ++h) {
    const auto& c = profile.at(0, h);
    if (c.mean) {
      t.push_back(h);
      y.push_back(*c.mean);
    }
  }
  return cosinor_fit_with_test(t, y);
}

// BH adjustment in place across one family of fits.
inline void apply_fdr(std::vector<CosinorRow>& rows) {
  std::vector<double> p;
  for (const auto& r : rows) p.push_back(r.fit.p_lr);
  const auto adj = bh_fdr(p);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].fit.p_fdr = adj[i];
}

}  // namespace chronoseme
