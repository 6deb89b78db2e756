#include <cmath>

#include "test_util.hpp"

using namespace chronoseme;
using namespace chronoseme::testing;

namespace {

const GeoTables& sample_tables() {
  static const GeoTables t = load_geo_tables(std::filesystem::path(CHRONOSEME_SOURCE_DIR) / "data" / "geotables.json");
  return t;
}

SubmissionRecord bare(const std::string& id) {
  SubmissionRecord r;
  r.id = id;
  r.created_utc = 1719835200;  // 2024-07-01T12:00:00Z
  return r;
}

struct SolarRef {
  const char* city;
  double lat, lon;
  const char* tz;
  unsigned month;
  double sunrise, sunset;
};

// NOAA-equation reference values (decimal local hours) for the 15th of the
// month in 2024, recorded before the implementation was written.
const SolarRef kSolarRefs[] = {
    {"London", 51.5074, -0.1278, "Europe/London", 3, 6.23228, 18.09258},
    {"London", 51.5074, -0.1278, "Europe/London", 6, 4.71794, 21.32296},
    {"London", 51.5074, -0.1278, "Europe/London", 9, 6.60559, 19.22960},
    {"London", 51.5074, -0.1278, "Europe/London", 12, 8.00710, 15.85401},
    {"New York", 40.7128, -74.0060, "America/New_York", 3, 7.11608, 19.05217},
    {"New York", 40.7128, -74.0060, "America/New_York", 6, 5.40920, 20.48216},
    {"New York", 40.7128, -74.0060, "America/New_York", 9, 6.62444, 19.06433},
    {"New York", 40.7128, -74.0060, "America/New_York", 12, 7.22614, 16.48920},
    {"Delhi", 28.6139, 77.2090, "Asia/Kolkata", 3, 6.51386, 18.49228},
    {"Delhi", 28.6139, 77.2090, "Asia/Kolkata", 6, 5.38725, 19.33844},
    {"Delhi", 28.6139, 77.2090, "Asia/Kolkata", 9, 6.10734, 18.42875},
    {"Delhi", 28.6139, 77.2090, "Asia/Kolkata", 12, 7.11031, 17.43661},
};

}  // namespace

TEST(ResolveLocation, NewsDomain) {
  auto r = bare("d");
  r.url_domain = "bbc.co.uk";
  const auto loc = resolve_location(r, sample_tables());
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->country, "GB");
  EXPECT_EQ(loc->level, GeoLevel::kUrlDomain);
  EXPECT_EQ(loc->tzid, "Europe/London");
  EXPECT_TRUE(loc->tz_from_country_default);
}

TEST(ResolveLocation, SubdomainAndTld) {
  auto r = bare("s");
  r.url_domain = "www.News.BBC.co.uk";
  EXPECT_EQ(resolve_location(r, sample_tables())->level, GeoLevel::kUrlDomain);
  r.url_domain = "example.de";
  const auto loc = resolve_location(r, sample_tables());
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->country, "DE");
  EXPECT_EQ(loc->level, GeoLevel::kTld);
}

TEST(ResolveLocation, CitySubreddit) {
  auto r = bare("c");
  r.subreddit = "London";
  const auto loc = resolve_location(r, sample_tables());
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->city, "London");
  EXPECT_EQ(loc->country, "GB");
  EXPECT_EQ(loc->level, GeoLevel::kSubreddit);
  EXPECT_FALSE(loc->tz_from_country_default);
}

TEST(ResolveLocation, DomainCountryPicksUpAgreeingCity) {
  auto r = bare("x");
  r.url_domain = "nytimes.com";
  r.subreddit = "losangeles";
  const auto loc = resolve_location(r, sample_tables());
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->tzid, "America/Los_Angeles");
  EXPECT_FALSE(loc->tz_from_country_default);
}

TEST(ResolveLocation, NothingMatches) {
  auto r = bare("n");
  r.subreddit = "funny";
  EXPECT_FALSE(resolve_location(r, sample_tables()).has_value());
}

TEST(ResolveLocation, RecordFieldsWin) {
  auto r = bare("f");
  r.country = "IN";
  r.url_domain = "bbc.co.uk";
  const auto loc = resolve_location(r, sample_tables());
  ASSERT_TRUE(loc);
  EXPECT_EQ(loc->country, "IN");
  EXPECT_EQ(loc->tzid, "Asia/Kolkata");
}

TEST(GeoTables, ValidateAgainstZoneDatabase) {
  EXPECT_NO_THROW(sample_tables().validate(tz_db()));
  GeoTables bad = sample_tables();
  bad.country_to_default_tz["ZZ"] = "Mars/Olympus";
  EXPECT_THROW(bad.validate(tz_db()), FormatError);
}

TEST(LocalizeRecords, CountsUnlocated) {
  auto a = bare("a");
  a.subreddit = "nyc";
  auto b = bare("b");
  b.subreddit = "funny";
  LocalizeReport rep;
  const auto out = localize_records({a, b}, sample_tables(), tz_db(), &rep);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(rep.unlocated, 1u);
  EXPECT_EQ(out[0].local.local.hour, 8u);
}

TEST(ToLocalTime, NewYorkSummer) {
  const auto lt = to_local_time(utc(2024, 7, 1, 12), "America/New_York", tz_db());
  EXPECT_EQ(lt.local.hour, 8u);
  EXPECT_EQ(lt.local.minute, 0u);
  EXPECT_EQ(lt.utc_offset_minutes(), -240);
  EXPECT_TRUE(lt.is_dst);
}

TEST(ToLocalTime, SpringForwardGapSkipped) {
  const auto before = to_local_time(utc(2024, 3, 10, 6, 59), "America/New_York", tz_db());
  const auto after = to_local_time(utc(2024, 3, 10, 7, 59), "America/New_York", tz_db());
  EXPECT_EQ(before.local.hour, 1u);
  EXPECT_EQ(before.local.minute, 59u);
  EXPECT_FALSE(before.is_dst);
  EXPECT_EQ(after.local.hour, 3u);
  EXPECT_EQ(after.local.minute, 59u);
  EXPECT_TRUE(after.is_dst);
}

TEST(ToLocalTime, FallBackRepeatsHour) {
  const auto first = to_local_time(utc(2024, 11, 3, 5, 30), "America/New_York", tz_db());
  const auto second = to_local_time(utc(2024, 11, 3, 6, 30), "America/New_York", tz_db());
  EXPECT_EQ(first.local.hour, 1u);
  EXPECT_EQ(second.local.hour, 1u);
  EXPECT_TRUE(first.is_dst);
  EXPECT_FALSE(second.is_dst);
}

TEST(ToLocalTime, UtcIsIdentity) {
  CounterRng rng(11, 0);
  for (int i = 0; i < 100; ++i) {
    const std::int64_t t = 946684800 + static_cast<std::int64_t>(rng.below(40ull * 365 * 86400));
    const auto lt = to_local_time(t, "Etc/UTC", tz_db());
    EXPECT_EQ(lt.utc_offset_seconds, 0);
    EXPECT_EQ(epoch_from_civil(lt.local), t);
  }
}

TEST(ToLocalTime, FarFutureUsesPosixRule) {
  const auto summer = to_local_time(utc(2090, 7, 1, 12), "Europe/London", tz_db());
  const auto winter = to_local_time(utc(2090, 1, 1, 12), "Europe/London", tz_db());
  EXPECT_EQ(summer.utc_offset_minutes(), 60);
  EXPECT_EQ(winter.utc_offset_minutes(), 0);
}

TEST(ToLocalTime, HalfHourAndSouthernZones) {
  EXPECT_EQ(to_local_time(utc(2024, 1, 1, 0), "Asia/Kolkata", tz_db()).utc_offset_minutes(), 330);
  EXPECT_TRUE(to_local_time(utc(2024, 1, 15, 0), "Australia/Sydney", tz_db()).is_dst);
  EXPECT_FALSE(to_local_time(utc(2024, 7, 15, 0), "Australia/Sydney", tz_db()).is_dst);
}

TEST(ToLocalTime, RoundTripAcrossZones) {
  CounterRng rng(3, 0);
  for (const char* tz : {"Europe/London", "America/Los_Angeles", "Asia/Tokyo", "Australia/Sydney", "America/St_Johns"}) {
    for (int i = 0; i < 200; ++i) {
      const std::int64_t t = 1577836800 + static_cast<std::int64_t>(rng.below(10ull * 365 * 86400));
      EXPECT_EQ(to_local_time(t, tz, tz_db()).to_utc(), t) << tz;
    }
  }
}

TEST(TzDatabase, UnknownZoneAndVersion) {
  EXPECT_THROW(tz_db().find("Not/AZone"), UnknownTimeZone);
  EXPECT_THROW(tz_db().find("../etc/passwd"), UnknownTimeZone);
  EXPECT_FALSE(tz_db().version().empty());
}

TEST(SolarTimes, EquatorEquinoxDaylight) {
  const auto s = solar_times(0.0, 0.0, "Etc/UTC", tz_db(), 2024, 3);
  EXPECT_EQ(s.marker, SolarMarker::kNormal);
  EXPECT_NEAR(s.daylight_hours(), 12.0, 0.2);
}

TEST(SolarTimes, ReferenceCitiesWithinThreeMinutes) {
  for (const auto& ref : kSolarRefs) {
    const auto s = solar_times(ref.lat, ref.lon, ref.tz, tz_db(), 2024, ref.month);
    EXPECT_NEAR(s.sunrise_local, ref.sunrise, 3.0 / 60.0) << ref.city << " month " << ref.month;
    EXPECT_NEAR(s.sunset_local, ref.sunset, 3.0 / 60.0) << ref.city << " month " << ref.month;
  }
}

TEST(SolarTimes, TromsoMidnightSunAndPolarNight) {
  const auto june = solar_times(69.65, 18.96, "Europe/Oslo", tz_db(), 2024, 6);
  EXPECT_EQ(june.marker, SolarMarker::kPolarDay);
  EXPECT_TRUE(std::isnan(june.sunrise_local));
  const auto dec = solar_times(69.65, 18.96, "Europe/Oslo", tz_db(), 2024, 12);
  EXPECT_EQ(dec.marker, SolarMarker::kPolarNight);
}

TEST(SolarTimes, HemisphereSign) {
  for (double lat : {-55.0, -30.0, -5.0, 5.0, 30.0, 55.0}) {
    const auto jun = solar_times(lat, 0.0, "Etc/UTC", tz_db(), 2024, 6);
    const auto dec = solar_times(lat, 0.0, "Etc/UTC", tz_db(), 2024, 12);
    if (lat > 0) {
      EXPECT_LT(jun.sunrise_local, dec.sunrise_local) << lat;
    } else {
      EXPECT_GT(jun.sunrise_local, dec.sunrise_local) << lat;
    }
  }
}

TEST(MonthlySolarProfile, SingleCityHasZeroSd) {
  const std::vector<CitySite> sites{{"GB", "London", 51.5074, -0.1278, "Europe/London", 10.0, 2024}};
  const auto prof = monthly_solar_profile(sites, tz_db());
  ASSERT_EQ(prof.at("GB").size(), 12u);
  for (const auto& m : prof.at("GB")) EXPECT_EQ(m.sunrise_sd, 0.0);
}

TEST(MonthlySolarProfile, WeightedMeanAndPopulationSd) {
  const double x[] = {6.0, 8.0};
  const double w[] = {1.0, 1.0};
  const auto s = weighted_mean_sd(x, w);
  EXPECT_DOUBLE_EQ(s.mean, 7.0);
  EXPECT_DOUBLE_EQ(s.sd, 1.0);

  const std::vector<CitySite> sites{{"US", "New York", 40.7128, -74.006, "America/New_York", 3.0, 2024},
                                    {"US", "Los Angeles", 34.0522, -118.2437, "America/Los_Angeles", 1.0, 2024}};
  const auto prof = monthly_solar_profile(sites, tz_db());
  const auto ny = solar_times(40.7128, -74.006, "America/New_York", tz_db(), 2024, 3);
  const auto la = solar_times(34.0522, -118.2437, "America/Los_Angeles", tz_db(), 2024, 3);
  const auto& march = prof.at("US")[2];
  EXPECT_EQ(march.month, 3u);
  const double mean = (3.0 * ny.sunrise_local + la.sunrise_local) / 4.0;
  EXPECT_NEAR(march.sunrise_mean, mean, 1e-12);
  const double var = (3.0 * std::pow(ny.sunrise_local - mean, 2) + std::pow(la.sunrise_local - mean, 2)) / 4.0;
  EXPECT_NEAR(march.sunrise_sd, std::sqrt(var), 1e-12);
}
