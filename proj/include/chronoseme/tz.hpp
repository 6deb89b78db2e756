#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chronoseme/civil_time.hpp"
#include "chronoseme/common.hpp"

#ifndef CHRONOSEME_TZDATA_DIR
#define CHRONOSEME_TZDATA_DIR "data/tzdata"
#endif

namespace chronoseme {

class UnknownTimeZone : public Error {
 public:
  using Error::Error;
};

struct ZoneOffset {
  std::int32_t utc_offset_seconds = 0;
  bool is_dst = false;
};

namespace detail {

// Parser and evaluator for the POSIX TZ strings found in TZif footers,
// e.g. "EST5EDT,M3.2.0,M11.1.0" or "<+0330>-3:30".
class PosixRule {
 public:
  static std::optional<PosixRule> parse(std::string_view s) {
    PosixRule r;
    std::size_t pos = 0;
    if (!parse_name(s, pos)) return std::nullopt;
    std::int32_t off = 0;
    if (!parse_offset(s, pos, off)) return std::nullopt;
    r.std_offset_ = -off;  // POSIX offsets are positive west of Greenwich
    if (pos == s.size()) return r;
    if (!parse_name(s, pos)) return std::nullopt;
    r.has_dst_ = true;
    r.dst_offset_ = r.std_offset_ + 3600;
    if (pos < s.size() && s[pos] != ',') {
      if (!parse_offset(s, pos, off)) return std::nullopt;
      r.dst_offset_ = -off;
    }
    if (pos == s.size() || s[pos] != ',') return std::nullopt;
    ++pos;
    if (!parse_rule(s, pos, r.start_)) return std::nullopt;
    if (pos == s.size() || s[pos] != ',') return std::nullopt;
    ++pos;
    if (!parse_rule(s, pos, r.end_)) return std::nullopt;
    if (pos != s.size()) return std::nullopt;
    return r;
  }

  ZoneOffset at(std::int64_t t) const {
    if (!has_dst_) return {std_offset_, false};
    const std::int64_t year = civil_from_epoch(t + std_offset_).year;
    const std::int64_t start = transition(start_, year, std_offset_);
    const std::int64_t end = transition(end_, year, dst_offset_);
    bool dst;
    if (start < end) {
      dst = t >= start && t < end;
    } else {
      dst = !(t >= end && t < start);
    }
    return dst ? ZoneOffset{dst_offset_, true} : ZoneOffset{std_offset_, false};
  }

 private:
  struct DateRule {
    enum class Kind { kJulianNoLeap, kZeroBased, kMonthWeekDay } kind = Kind::kMonthWeekDay;
    int day = 0;
    int month = 0;
    int week = 0;
    std::int32_t time = 7200;
  };

  static bool parse_name(std::string_view s, std::size_t& pos) {
    if (pos < s.size() && s[pos] == '<') {
      auto close = s.find('>', pos);
      if (close == std::string_view::npos) return false;
      pos = close + 1;
      return true;
    }
    std::size_t start = pos;
    while (pos < s.size() && ((s[pos] >= 'A' && s[pos] <= 'Z') || (s[pos] >= 'a' && s[pos] <= 'z'))) ++pos;
    return pos - start >= 3;
  }

  static bool parse_int(std::string_view s, std::size_t& pos, int& out) {
    std::size_t start = pos;
    out = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') out = out * 10 + (s[pos++] - '0');
    return pos > start;
  }

  // [+-]hh[:mm[:ss]]
  static bool parse_offset(std::string_view s, std::size_t& pos, std::int32_t& out) {
    int sign = 1;
    if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) sign = s[pos++] == '-' ? -1 : 1;
    int h = 0, m = 0, sec = 0;
    if (!parse_int(s, pos, h)) return false;
    if (pos < s.size() && s[pos] == ':') {
      ++pos;
      if (!parse_int(s, pos, m)) return false;
      if (pos < s.size() && s[pos] == ':') {
        ++pos;
        if (!parse_int(s, pos, sec)) return false;
      }
    }
    out = sign * (h * 3600 + m * 60 + sec);
    return true;
  }

  static bool parse_rule(std::string_view s, std::size_t& pos, DateRule& r) {
    if (pos >= s.size()) return false;
    if (s[pos] == 'M') {
      ++pos;
      r.kind = DateRule::Kind::kMonthWeekDay;
      if (!parse_int(s, pos, r.month) || pos >= s.size() || s[pos++] != '.') return false;
      if (!parse_int(s, pos, r.week) || pos >= s.size() || s[pos++] != '.') return false;
      if (!parse_int(s, pos, r.day)) return false;
      if (r.month < 1 || r.month > 12 || r.week < 1 || r.week > 5 || r.day > 6) return false;
    } else if (s[pos] == 'J') {
      ++pos;
      r.kind = DateRule::Kind::kJulianNoLeap;
      if (!parse_int(s, pos, r.day)) return false;
    } else {
      r.kind = DateRule::Kind::kZeroBased;
      if (!parse_int(s, pos, r.day)) return false;
    }
    if (pos < s.size() && s[pos] == '/') {
      ++pos;
      if (!parse_offset(s, pos, r.time)) return false;
    }
    return true;
  }

  // UTC instant of the rule's local wall-clock transition in the given year.
  static std::int64_t transition(const DateRule& r, std::int64_t year, std::int32_t offset_before) {
    std::int64_t days = 0;
    switch (r.kind) {
      case DateRule::Kind::kJulianNoLeap: {
        int doy = r.day - 1;
        if (is_leap_year(year) && r.day >= 60) ++doy;
        days = days_from_civil(year, 1, 1) + doy;
        break;
      }
      case DateRule::Kind::kZeroBased:
        days = days_from_civil(year, 1, 1) + r.day;
        break;
      case DateRule::Kind::kMonthWeekDay: {
        const std::int64_t first = days_from_civil(year, static_cast<unsigned>(r.month), 1);
        const int wd = static_cast<int>(weekday_from_days(first));
        int mday = 1 + (r.day - wd + 7) % 7 + (r.week - 1) * 7;
        const int dim = static_cast<int>(days_in_month(year, static_cast<unsigned>(r.month)));
        while (mday > dim) mday -= 7;
        days = first + mday - 1;
        break;
      }
    }
    return days * 86400 + r.time - offset_before;
  }

  std::int32_t std_offset_ = 0;
  std::int32_t dst_offset_ = 0;
  bool has_dst_ = false;
  DateRule start_;
  DateRule end_;
};

inline std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline std::int64_t read_be64(const unsigned char* p) {
  return static_cast<std::int64_t>((std::uint64_t{read_be32(p)} << 32) | read_be32(p + 4));
}

}  // namespace detail

// One zone loaded from a TZif (RFC 8536) file.
class TimeZone {
 public:
  static TimeZone from_tzif(std::string name, const std::vector<unsigned char>& bytes) {
    TimeZone tz;
    tz.name_ = std::move(name);
    auto fail = [&](const char* why) { return FormatError("tzif " + tz.name_ + ": " + why); };
    if (bytes.size() < 44 || bytes[0] != 'T' || bytes[1] != 'Z' || bytes[2] != 'i' || bytes[3] != 'f') {
      throw fail("bad magic");
    }
    struct Counts {
      std::uint32_t isut, isstd, leap, time, type, chars;
    };
    auto counts_at = [&](std::size_t off) {
      if (off + 44 > bytes.size()) throw fail("truncated header");
      const unsigned char* p = bytes.data() + off + 20;
      return Counts{detail::read_be32(p), detail::read_be32(p + 4), detail::read_be32(p + 8),
                    detail::read_be32(p + 12), detail::read_be32(p + 16), detail::read_be32(p + 20)};
    };
    const char version = static_cast<char>(bytes[4]);
    Counts c = counts_at(0);
    std::size_t off = 44;
    int time_size = 4;
    if (version >= '2') {
      // skip the legacy 32-bit block
      off += c.time * 5 + c.type * 6 + c.chars + c.leap * 8 + c.isstd + c.isut;
      c = counts_at(off);
      off += 44;
      time_size = 8;
    }
    const std::size_t need = off + c.time * (time_size + 1) + c.type * 6 + c.chars +
                             c.leap * (time_size + 4) + c.isstd + c.isut;
    if (need > bytes.size() || c.type == 0) throw fail("truncated data block");
    const unsigned char* p = bytes.data() + off;
    tz.transitions_.resize(c.time);
    for (std::uint32_t i = 0; i < c.time; ++i) {
      tz.transitions_[i] = time_size == 8 ? detail::read_be64(p + 8 * i)
                                          : static_cast<std::int32_t>(detail::read_be32(p + 4 * i));
    }
    p += c.time * time_size;
    tz.transition_types_.assign(p, p + c.time);
    p += c.time;
    tz.types_.resize(c.type);
    for (std::uint32_t i = 0; i < c.type; ++i) {
      tz.types_[i].utc_offset_seconds = static_cast<std::int32_t>(detail::read_be32(p + 6 * i));
      tz.types_[i].is_dst = p[6 * i + 4] != 0;
    }
    for (auto idx : tz.transition_types_) {
      if (idx >= c.type) throw fail("transition type out of range");
    }
    if (version >= '2' && need < bytes.size() && bytes[need] == '\n') {
      auto end = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(need) + 1, bytes.end(), '\n');
      std::string footer(bytes.begin() + static_cast<std::ptrdiff_t>(need) + 1, end);
      if (!footer.empty()) tz.footer_ = detail::PosixRule::parse(footer);
    }
    return tz;
  }

  const std::string& name() const { return name_; }

  ZoneOffset offset_at(std::int64_t utc_seconds) const {
    if (transitions_.empty() || utc_seconds < transitions_.front()) {
      if (transitions_.empty() && footer_) return footer_->at(utc_seconds);
      return types_.front();
    }
    if (utc_seconds >= transitions_.back() && footer_) return footer_->at(utc_seconds);
    auto it = std::upper_bound(transitions_.begin(), transitions_.end(), utc_seconds);
    const auto idx = static_cast<std::size_t>(std::distance(transitions_.begin(), it)) - 1;
    return types_[transition_types_[idx]];
  }

 private:
  std::string name_;
  std::vector<std::int64_t> transitions_;
  std::vector<std::uint8_t> transition_types_;
  std::vector<ZoneOffset> types_;
  std::optional<detail::PosixRule> footer_;
};

inline std::filesystem::path default_tzdata_dir() {
  if (const char* env = std::getenv("CHRONOSEME_TZDIR")) return env;
  return CHRONOSEME_TZDATA_DIR;
}

// Read-only view of the bundled zoneinfo snapshot. Zones are loaded lazily
// and cached; lookups are safe from multiple threads.
class TzDatabase {
 public:
  explicit TzDatabase(std::filesystem::path dir = default_tzdata_dir()) : dir_(std::move(dir)) {
    std::ifstream in(dir_ / "VERSION");
    if (in) std::getline(in, version_);
  }

  const std::string& version() const { return version_; }
  const std::filesystem::path& directory() const { return dir_; }

  std::shared_ptr<const TimeZone> find(const std::string& tzid) const {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(tzid); it != cache_.end()) return it->second;
    if (!valid_name(tzid)) throw UnknownTimeZone("unknown time zone: '" + tzid + "'");
    std::ifstream in(dir_ / tzid, std::ios::binary);
    if (!in) throw UnknownTimeZone("unknown time zone: '" + tzid + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto tz = std::make_shared<const TimeZone>(TimeZone::from_tzif(tzid, bytes));
    cache_.emplace(tzid, tz);
    return tz;
  }

  bool contains(const std::string& tzid) const {
    try {
      find(tzid);
      return true;
    } catch (const Error&) {
      return false;
    }
  }

 private:
  static bool valid_name(const std::string& tzid) {
    if (tzid.empty() || tzid.front() == '/' || tzid.find("..") != std::string::npos) return false;
    return std::all_of(tzid.begin(), tzid.end(), [](char ch) {
      return (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '/' ||
             ch == '_' || ch == '-' || ch == '+';
    });
  }

  std::filesystem::path dir_;
  std::string version_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const TimeZone>> cache_;
};

struct LocalTime {
  CivilDateTime local;
  std::int32_t utc_offset_seconds = 0;
  bool is_dst = false;

  std::int32_t utc_offset_minutes() const { return utc_offset_seconds / 60; }
  std::int64_t to_utc() const { return epoch_from_civil(local) - utc_offset_seconds; }
  double decimal_hour() const { return local.hour + local.minute / 60.0 + local.second / 3600.0; }
};

inline LocalTime to_local_time(std::int64_t created_utc, const TimeZone& zone) {
  const ZoneOffset off = zone.offset_at(created_utc);
  LocalTime lt{civil_from_epoch(created_utc + off.utc_offset_seconds), off.utc_offset_seconds, off.is_dst};
  if (lt.to_utc() != created_utc) throw Error("local time round trip failed for " + zone.name());
  return lt;
}

inline LocalTime to_local_time(std::int64_t created_utc, const std::string& tzid, const TzDatabase& db) {
  return to_local_time(created_utc, *db.find(tzid));
}

}  // namespace chronoseme
