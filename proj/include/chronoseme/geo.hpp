#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chronoseme/records.hpp"
#include "chronoseme/tz.hpp"

namespace chronoseme {

struct CityInfo {
  std::string city;
  std::string country;
  double lat = 0.0;
  double lon = 0.0;
  std::string tzid;
};

struct GeoTables {
  std::map<std::string, std::string> tld_to_country;     // ".uk" -> "GB"
  std::map<std::string, std::string> domain_to_country;  // "bbc.co.uk" -> "GB"
  std::map<std::string, CityInfo> subreddit_to_city;     // lower-case subreddit -> city
  std::map<std::string, std::string> country_to_default_tz;

  // Checks every tzid against the zone database.
  void validate(const TzDatabase& db) const {
    for (const auto& [sub, c] : subreddit_to_city) {
      if (c.tzid.empty()) throw FormatError("geotables: city for subreddit '" + sub + "' has no tzid");
      if (!(c.lat >= -90 && c.lat <= 90 && c.lon >= -180 && c.lon <= 180)) {
        throw FormatError("geotables: city for subreddit '" + sub + "' has invalid coordinates");
      }
      if (!db.contains(c.tzid)) throw FormatError("geotables: unknown tzid '" + c.tzid + "'");
    }
    for (const auto& [cc, tz] : country_to_default_tz) {
      if (!db.contains(tz)) throw FormatError("geotables: unknown tzid '" + tz + "' for country " + cc);
    }
  }
};

inline GeoTables geo_tables_from_json(const Json& j) {
  GeoTables t;
  if (auto it = j.find("tld_to_country"); it != j.end()) {
    for (auto& [k, v] : it->items()) {
      std::string key = to_lower(k);
      if (key.empty() || key.front() != '.') key = "." + key;
      t.tld_to_country[key] = v.get<std::string>();
    }
  }
  if (auto it = j.find("domain_to_country"); it != j.end()) {
    for (auto& [k, v] : it->items()) t.domain_to_country[to_lower(k)] = v.get<std::string>();
  }
  if (auto it = j.find("subreddit_to_city"); it != j.end()) {
    for (auto& [k, v] : it->items()) {
      CityInfo c;
      c.city = v.at("city").get<std::string>();
      c.country = v.at("country").get<std::string>();
      c.lat = v.at("lat").get<double>();
      c.lon = v.at("lon").get<double>();
      c.tzid = v.at("tzid").get<std::string>();
      t.subreddit_to_city[to_lower(k)] = c;
    }
  }
  if (auto it = j.find("country_to_default_tz"); it != j.end()) {
    for (auto& [k, v] : it->items()) t.country_to_default_tz[k] = v.get<std::string>();
  }
  return t;
}

inline GeoTables load_geo_tables(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read geotables file " + path.string());
  try {
    return geo_tables_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw FormatError("geotables " + path.string() + ": " + e.what());
  }
}

enum class GeoLevel { kRecordFields, kUrlDomain, kTld, kSubreddit };

inline std::string_view geo_level_name(GeoLevel l) {
  switch (l) {
    case GeoLevel::kRecordFields: return "record";
    case GeoLevel::kUrlDomain: return "url_domain";
    case GeoLevel::kTld: return "tld";
    case GeoLevel::kSubreddit: return "subreddit";
  }
  return "?";
}

struct LocationAssignment {
  std::string country;
  std::string city;
  std::optional<double> lat;
  std::optional<double> lon;
  std::string tzid;
  GeoLevel level = GeoLevel::kRecordFields;
  // Set when the zone came from country_to_default_tz rather than a city or
  // the record itself; multi-zone countries make such times approximate.
  bool tz_from_country_default = false;
};

namespace detail {

inline std::string normalize_domain(std::string d) {
  d = to_lower(d);
  if (d.rfind("www.", 0) == 0) d = d.substr(4);
  while (!d.empty() && d.back() == '.') d.pop_back();
  return d;
}

inline void fill_tz_from_country(LocationAssignment& a, const GeoTables& t) {
  if (!a.tzid.empty()) return;
  if (auto it = t.country_to_default_tz.find(a.country); it != t.country_to_default_tz.end()) {
    a.tzid = it->second;
    a.tz_from_country_default = true;
  }
}

inline void attach_city(LocationAssignment& a, const CityInfo& c) {
  a.city = c.city;
  a.lat = c.lat;
  a.lon = c.lon;
  a.tzid = c.tzid;
}

}  // namespace detail

// Precedence: record fields > url_domain > TLD suffix > subreddit city.
// A URL-level country picks up the subreddit city when both agree on the
// country, so the city's zone wins over the country default.
inline std::optional<LocationAssignment> resolve_location(const SubmissionRecord& r, const GeoTables& t) {
  const CityInfo* sub_city = nullptr;
  if (auto it = t.subreddit_to_city.find(to_lower(r.subreddit)); it != t.subreddit_to_city.end()) {
    sub_city = &it->second;
  }

  if (!r.country.empty() || !r.tzid.empty()) {
    LocationAssignment a;
    a.level = GeoLevel::kRecordFields;
    a.country = r.country;
    a.city = r.city;
    a.lat = r.lat;
    a.lon = r.lon;
    a.tzid = r.tzid;
    detail::fill_tz_from_country(a, t);
    return a;
  }

  auto from_country = [&](const std::string& country, GeoLevel level) {
    LocationAssignment a;
    a.level = level;
    a.country = country;
    if (sub_city && sub_city->country == country) detail::attach_city(a, *sub_city);
    detail::fill_tz_from_country(a, t);
    return a;
  };

  if (!r.url_domain.empty()) {
    const std::string domain = detail::normalize_domain(r.url_domain);
    // exact host, then parent domains ("news.bbc.co.uk" -> "bbc.co.uk")
    for (std::string d = domain; !d.empty();) {
      if (auto it = t.domain_to_country.find(d); it != t.domain_to_country.end()) {
        return from_country(it->second, GeoLevel::kUrlDomain);
      }
      auto dot = d.find('.');
      if (dot == std::string::npos) break;
      d = d.substr(dot + 1);
    }
    // longest matching suffix (".co.uk" before ".uk")
    const std::string dotted = "." + domain;
    const std::string* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [tld, country] : t.tld_to_country) {
      if (tld.size() > best_len && ends_with(dotted, tld)) {
        best = &country;
        best_len = tld.size();
      }
    }
    if (best) return from_country(*best, GeoLevel::kTld);
  }

  if (sub_city) {
    LocationAssignment a;
    a.level = GeoLevel::kSubreddit;
    a.country = sub_city->country;
    detail::attach_city(a, *sub_city);
    return a;
  }
  return std::nullopt;
}

// A record with resolved location and local clock time.
struct LocalizedRecord {
  SubmissionRecord record;  // country/city/lat/lon/tzid filled from the assignment
  LocalTime local;
  GeoLevel level = GeoLevel::kRecordFields;
  bool tz_fallback = false;
};

inline Json local_time_to_json(const LocalTime& lt) {
  return {{"year", lt.local.year},
          {"month", lt.local.month},
          {"day", lt.local.day},
          {"hour", lt.local.hour},
          {"minute", lt.local.minute},
          {"second", lt.local.second},
          {"utc_offset_minutes", lt.utc_offset_minutes()},
          {"utc_offset_seconds", lt.utc_offset_seconds},
          {"is_dst", lt.is_dst}};
}

inline LocalTime local_time_from_json(const Json& j) {
  LocalTime lt;
  lt.local.year = j.at("year").get<std::int64_t>();
  lt.local.month = j.at("month").get<unsigned>();
  lt.local.day = j.at("day").get<unsigned>();
  lt.local.hour = j.at("hour").get<unsigned>();
  lt.local.minute = j.at("minute").get<unsigned>();
  lt.local.second = j.at("second").get<unsigned>();
  if (auto it = j.find("utc_offset_seconds"); it != j.end()) {
    lt.utc_offset_seconds = it->get<std::int32_t>();
  } else {
    lt.utc_offset_seconds = j.at("utc_offset_minutes").get<std::int32_t>() * 60;
  }
  lt.is_dst = j.value("is_dst", false);
  if (lt.local.month < 1 || lt.local.month > 12 || lt.local.hour > 23 || lt.local.minute > 59 || lt.local.second > 60) {
    throw FormatError("local_time out of range");
  }
  return lt;
}

inline Json localized_to_json(const LocalizedRecord& lr) {
  Json j = record_to_json(lr.record);
  j["local_time"] = local_time_to_json(lr.local);
  j["geo_level"] = std::string(geo_level_name(lr.level));
  j["tz_fallback"] = lr.tz_fallback;
  return j;
}

struct LocalizeReport {
  std::size_t input = 0;
  std::size_t localized = 0;
  std::size_t unlocated = 0;
  std::size_t no_timezone = 0;
  std::size_t tz_fallback = 0;
  std::vector<std::string> warnings;

  Json to_json() const {
    return {{"input", input},
            {"localized", localized},
            {"unlocated", unlocated},
            {"no_timezone", no_timezone},
            {"tz_fallback", tz_fallback}};
  }
};

// Resolves location and converts to local time; records without a location
// or a usable zone are excluded and counted.
inline std::vector<LocalizedRecord> localize_records(const std::vector<SubmissionRecord>& records,
                                                     const GeoTables& tables, const TzDatabase& db,
                                                     LocalizeReport* report = nullptr) {
  LocalizeReport rep;
  rep.input = records.size();
  std::vector<LocalizedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto loc = resolve_location(r, tables);
    if (!loc) {
      ++rep.unlocated;
      continue;
    }
    if (loc->tzid.empty()) {
      ++rep.no_timezone;
      continue;
    }
    LocalizedRecord lr;
    lr.record = r;
    lr.record.country = loc->country;
    lr.record.city = loc->city;
    lr.record.lat = loc->lat;
    lr.record.lon = loc->lon;
    lr.record.tzid = loc->tzid;
    lr.level = loc->level;
    lr.tz_fallback = loc->tz_from_country_default;
    try {
      lr.local = to_local_time(r.created_utc, loc->tzid, db);
    } catch (const UnknownTimeZone& e) {
      ++rep.no_timezone;
      rep.warnings.push_back("record " + r.id + ": " + e.what());
      continue;
    }
    rep.tz_fallback += lr.tz_fallback ? 1 : 0;
    out.push_back(std::move(lr));
  }
  rep.localized = out.size();
  if (report) *report = std::move(rep);
  return out;
}

inline void write_localized(const std::filesystem::path& path, const std::vector<LocalizedRecord>& recs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : recs) out << localized_to_json(r).dump() << '\n';
}

}  // namespace chronoseme
