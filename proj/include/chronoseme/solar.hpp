#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chronoseme/civil_time.hpp"
#include "chronoseme/common.hpp"
#include "chronoseme/tz.hpp"

namespace chronoseme {

// NOAA low-accuracy solar position equations (the NOAA Solar Calculator
// formulation), refined once at the event time.
namespace noaa {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

inline double julian_century(double jd) { return (jd - 2451545.0) / 36525.0; }

inline double geom_mean_long_sun(double t) {
  double l0 = 280.46646 + t * (36000.76983 + t * 0.0003032);
  l0 = std::fmod(l0, 360.0);
  return l0 < 0 ? l0 + 360.0 : l0;
}

inline double geom_mean_anomaly_sun(double t) { return 357.52911 + t * (35999.05029 - 0.0001537 * t); }

inline double eccentricity_earth_orbit(double t) { return 0.016708634 - t * (0.000042037 + 0.0000001267 * t); }

inline double sun_eq_of_center(double t) {
  const double m = deg2rad(geom_mean_anomaly_sun(t));
  return std::sin(m) * (1.914602 - t * (0.004817 + 0.000014 * t)) + std::sin(2 * m) * (0.019993 - 0.000101 * t) +
         std::sin(3 * m) * 0.000289;
}

inline double sun_apparent_long(double t) {
  const double true_long = geom_mean_long_sun(t) + sun_eq_of_center(t);
  return true_long - 0.00569 - 0.00478 * std::sin(deg2rad(125.04 - 1934.136 * t));
}

inline double mean_obliquity_of_ecliptic(double t) {
  const double seconds = 21.448 - t * (46.8150 + t * (0.00059 - t * 0.001813));
  return 23.0 + (26.0 + seconds / 60.0) / 60.0;
}

inline double obliquity_correction(double t) {
  return mean_obliquity_of_ecliptic(t) + 0.00256 * std::cos(deg2rad(125.04 - 1934.136 * t));
}

inline double sun_declination(double t) {
  return rad2deg(std::asin(std::sin(deg2rad(obliquity_correction(t))) * std::sin(deg2rad(sun_apparent_long(t)))));
}

// minutes
inline double equation_of_time(double t) {
  const double epsilon = obliquity_correction(t);
  const double l0 = deg2rad(geom_mean_long_sun(t));
  const double e = eccentricity_earth_orbit(t);
  const double m = deg2rad(geom_mean_anomaly_sun(t));
  double y = std::tan(deg2rad(epsilon) / 2.0);
  y *= y;
  const double etime = y * std::sin(2 * l0) - 2 * e * std::sin(m) + 4 * e * y * std::sin(m) * std::cos(2 * l0) -
                       0.5 * y * y * std::sin(4 * l0) - 1.25 * e * e * std::sin(2 * m);
  return rad2deg(etime) * 4.0;
}

inline constexpr double kZenithDeg = 90.833;

// cos of the hour angle at which the sun's center sits at the refracted
// horizon; > 1 means it never rises, < -1 that it never sets.
inline double hour_angle_cos(double lat_deg, double decl_deg) {
  const double lat = deg2rad(lat_deg), dec = deg2rad(decl_deg);
  return std::cos(deg2rad(kZenithDeg)) / (std::cos(lat) * std::cos(dec)) - std::tan(lat) * std::tan(dec);
}

enum class EventKind { kNormal, kPolarDay, kPolarNight };

struct Event {
  EventKind kind = EventKind::kNormal;
  double minutes_utc = kNaN;  // from 0h UTC of the reference date
};

// lon positive east.
inline Event sunrise_set_utc(bool rise, double jd0, double lat, double lon) {
  auto once = [&](double jd) -> Event {
    const double t = julian_century(jd);
    const double eq = equation_of_time(t);
    const double dec = sun_declination(t);
    const double c = hour_angle_cos(lat, dec);
    if (c > 1.0) return {EventKind::kPolarNight, kNaN};
    if (c < -1.0) return {EventKind::kPolarDay, kNaN};
    double ha = rad2deg(std::acos(c));
    if (!rise) ha = -ha;
    return {EventKind::kNormal, 720.0 - 4.0 * (lon + ha) - eq};
  };
  Event first = once(jd0);
  if (first.kind != EventKind::kNormal) return first;
  return once(jd0 + first.minutes_utc / 1440.0);
}

inline double julian_day(std::int64_t y, unsigned m, unsigned d) {
  return static_cast<double>(days_from_civil(y, m, d)) + 2440587.5;
}

}  // namespace noaa

enum class SolarMarker { kNormal, kPolarDay, kPolarNight };

inline std::string_view solar_marker_name(SolarMarker m) {
  switch (m) {
    case SolarMarker::kNormal: return "normal";
    case SolarMarker::kPolarDay: return "POLAR_DAY";
    case SolarMarker::kPolarNight: return "POLAR_NIGHT";
  }
  return "?";
}

// Sunrise/sunset on day 15 of the month in local civil decimal hours
// (DST-aware). Hours are NaN when marker != kNormal.
struct SolarTimes {
  std::string city;
  std::int64_t year = 0;
  unsigned month = 1;
  SolarMarker marker = SolarMarker::kNormal;
  double sunrise_local = kNaN;
  double sunset_local = kNaN;

  double daylight_hours() const { return sunset_local - sunrise_local; }
};

inline double to_local_hours(const TimeZone& zone, std::int64_t day0_days, double minutes_utc) {
  const double instant = static_cast<double>(day0_days) * 86400.0 + minutes_utc * 60.0;
  const auto off = zone.offset_at(static_cast<std::int64_t>(std::floor(instant)));
  return (instant + off.utc_offset_seconds) / 3600.0 - static_cast<double>(day0_days) * 24.0;
}

inline SolarTimes solar_times(double lat, double lon, const TimeZone& zone, std::int64_t year, unsigned month,
                              unsigned day = 15) {
  if (!(std::fabs(lat) <= 90.0)) throw Error("solar_times: |lat| must be <= 90");
  if (month < 1 || month > 12) throw Error("solar_times: month out of range");
  // Clamp away from the poles where the hour-angle formula divides by zero.
  lat = std::clamp(lat, -89.999, 89.999);
  SolarTimes s;
  s.year = year;
  s.month = month;
  const double jd0 = noaa::julian_day(year, month, day);
  const auto rise = noaa::sunrise_set_utc(true, jd0, lat, lon);
  const auto set = noaa::sunrise_set_utc(false, jd0, lat, lon);
  if (rise.kind != noaa::EventKind::kNormal || set.kind != noaa::EventKind::kNormal) {
    const auto kind = rise.kind != noaa::EventKind::kNormal ? rise.kind : set.kind;
    s.marker = kind == noaa::EventKind::kPolarDay ? SolarMarker::kPolarDay : SolarMarker::kPolarNight;
    return s;
  }
  const std::int64_t day0 = days_from_civil(year, month, day);
  s.sunrise_local = to_local_hours(zone, day0, rise.minutes_utc);
  s.sunset_local = to_local_hours(zone, day0, set.minutes_utc);
  return s;
}

inline SolarTimes solar_times(double lat, double lon, const std::string& tzid, const TzDatabase& db,
                              std::int64_t year, unsigned month) {
  return solar_times(lat, lon, *db.find(tzid), year, month);
}

// A located city contributing submissions to a country.
struct CitySite {
  std::string country;
  std::string city;
  double lat = 0.0;
  double lon = 0.0;
  std::string tzid;
  double weight = 1.0;  // submission count
  std::int64_t year = 2024;
};

struct MonthlySolar {
  unsigned month = 1;
  double sunrise_mean = kNaN;
  double sunrise_sd = kNaN;  // population SD, weighted
  double sunset_mean = kNaN;
  double sunset_sd = kNaN;
  std::size_t n_cities = 0;
};

struct WeightedStats {
  double mean = kNaN;
  double sd = kNaN;
};

inline WeightedStats weighted_mean_sd(std::span<const double> x, std::span<const double> w) {
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
  }
  if (!(sw > 0.0)) return {};
  const double m = swx / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += w[i] * (x[i] - m) * (x[i] - m);
  return {m, std::sqrt(ss / sw)};
}

// Per country, per month: submission-weighted mean and population SD of
// city sunrise/sunset. Cities under a polar marker that month are left out;
// countries without any located city produce no entry.
inline std::map<std::string, std::vector<MonthlySolar>> monthly_solar_profile(const std::vector<CitySite>& sites,
                                                                               const TzDatabase& db) {
  std::map<std::string, std::vector<const CitySite*>> by_country;
  for (const auto& s : sites) by_country[s.country].push_back(&s);
  std::map<std::string, std::vector<MonthlySolar>> out;
  for (const auto& [country, cities] : by_country) {
    std::vector<MonthlySolar> months;
    for (unsigned m = 1; m <= 12; ++m) {
      std::vector<double> rise, set, w;
      for (const CitySite* c : cities) {
        const SolarTimes st = solar_times(c->lat, c->lon, c->tzid, db, c->year, m);
        if (st.marker != SolarMarker::kNormal) continue;
        rise.push_back(st.sunrise_local);
        set.push_back(st.sunset_local);
        w.push_back(c->weight);
      }
      if (rise.empty()) continue;
      MonthlySolar ms;
      ms.month = m;
      ms.n_cities = rise.size();
      const auto r = weighted_mean_sd(rise, w);
      const auto s = weighted_mean_sd(set, w);
      ms.sunrise_mean = r.mean;
      ms.sunrise_sd = r.sd;
      ms.sunset_mean = s.mean;
      ms.sunset_sd = s.sd;
      months.push_back(ms);
    }
    if (!months.empty()) out.emplace(country, std::move(months));
  }
  return out;
}

}  // namespace chronoseme
