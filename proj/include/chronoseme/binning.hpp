#pragma once

#include <compare>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronoseme/embeddings.hpp"
#include "chronoseme/filter.hpp"
#include "chronoseme/geo.hpp"
#include "chronoseme/records.hpp"
#include "chronoseme/tz.hpp"

namespace chronoseme {

enum class BinResolution { kHour, kMonthHour };

inline std::string_view resolution_name(BinResolution r) { return r == BinResolution::kHour ? "hour" : "month_hour"; }

inline BinResolution parse_resolution(std::string_view s) {
  if (s == "hour") return BinResolution::kHour;
  if (s == "month_hour") return BinResolution::kMonthHour;
  throw Error("unknown bin resolution '" + std::string(s) + "'");
}

// month == 0 marks the pooled (hour-of-day only) resolution.
struct BinKey {
  int month = 0;
  int hour = 0;
  auto operator<=>(const BinKey&) const = default;
};

struct BinIndex {
  BinResolution resolution = BinResolution::kHour;
  std::map<BinKey, std::vector<std::size_t>> cells;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : cells) n += v.size();
    return n;
  }
  const std::vector<std::size_t>& at(int month, int hour) const { return cells.at(BinKey{month, hour}); }
};

inline BinIndex empty_bin_index(BinResolution res) {
  BinIndex idx;
  idx.resolution = res;
  const int m0 = res == BinResolution::kHour ? 0 : 1;
  const int m1 = res == BinResolution::kHour ? 0 : 12;
  for (int m = m0; m <= m1; ++m) {
    for (int h = 0; h < 24; ++h) idx.cells[{m, h}];
  }
  return idx;
}

// Every cell exists (24 or 288); row indices ascend within each cell.
inline BinIndex bin_by_hour(std::span<const std::optional<LocalTime>> local_times, BinResolution res) {
  BinIndex idx = empty_bin_index(res);
  for (std::size_t i = 0; i < local_times.size(); ++i) {
    if (!local_times[i]) throw Error("record at row " + std::to_string(i) + " has no local time");
    const auto& lt = local_times[i]->local;
    const int month = res == BinResolution::kHour ? 0 : static_cast<int>(lt.month);
    idx.cells[{month, static_cast<int>(lt.hour)}].push_back(i);
  }
  return idx;
}

inline BinIndex bin_by_hour(std::span<const LocalTime> local_times, BinResolution res) {
  std::vector<std::optional<LocalTime>> opt(local_times.begin(), local_times.end());
  return bin_by_hour(std::span<const std::optional<LocalTime>>(opt), res);
}

// Bins only the listed rows (e.g. one country's records); cell entries are
// row indices into the full corpus.
inline BinIndex bin_rows(std::span<const LocalTime> local_times, std::span<const std::size_t> rows, BinResolution res) {
  BinIndex idx = empty_bin_index(res);
  for (auto r : rows) {
    const auto& lt = local_times[r].local;
    const int month = res == BinResolution::kHour ? 0 : static_cast<int>(lt.month);
    idx.cells[{month, static_cast<int>(lt.hour)}].push_back(r);
  }
  return idx;
}

// Retained, localized records of one ingest run: the contents of binned.idx.
struct BinnedRecord {
  std::string id;
  std::string country;
  std::string city;
  std::optional<double> lat;
  std::optional<double> lon;
  std::string tzid;
  std::optional<double> sentiment;
  LocalTime local;
};

inline constexpr const char* kUnknownGroup = "unknown";

struct IngestReport {
  std::size_t parsed = 0;
  std::size_t skipped_lines = 0;
  FilterReport filter;
  std::size_t no_local_time = 0;
  std::size_t binned = 0;

  Json to_json() const {
    return {{"parsed", parsed},
            {"skipped_lines", skipped_lines},
            {"filter", filter.to_json()},
            {"no_local_time", no_local_time},
            {"binned", binned}};
  }
};

struct BinnedCorpus {
  std::vector<BinnedRecord> records;
  IngestReport report;
  std::vector<std::string> warnings;
  std::size_t embedding_dim = 0;

  std::vector<LocalTime> local_times() const {
    std::vector<LocalTime> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.local);
    return out;
  }

  std::vector<SubmissionRecord> as_records() const {
    std::vector<SubmissionRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
      SubmissionRecord s;
      s.id = r.id;
      s.created_utc = r.local.to_utc();
      s.country = r.country;
      out.push_back(std::move(s));
    }
    return out;
  }

  // Rows per group key in ascending row order; map order fixes group order.
  std::map<std::string, std::vector<std::size_t>> groups() const {
    std::map<std::string, std::vector<std::size_t>> g;
    for (std::size_t i = 0; i < records.size(); ++i) {
      g[records[i].country.empty() ? kUnknownGroup : records[i].country].push_back(i);
    }
    return g;
  }
};

struct IngestOptions {
  FilterPolicy policy;
  EmbeddingLoadOptions embeddings;
  std::optional<GeoTables> geo;  // resolve location for records without a local_time block
};

// parse -> filter -> local time -> embedding alignment. Local time comes
// from a geotime "local_time" block when present, else from geo tables
// (when given), else from the record's tzid; records with none of these
// are dropped and counted.
inline BinnedCorpus ingest(const std::filesystem::path& records_path, const std::filesystem::path& embeddings_path,
                           const IngestOptions& opts, const TzDatabase& db, EmbeddingMatrix* aligned = nullptr) {
  std::unordered_map<std::string, LocalTime> precomputed;
  RecordSet parsed = parse_records(records_path, [&](const Json& j, const SubmissionRecord& r) {
    if (auto it = j.find("local_time"); it != j.end()) {
      LocalTime lt = local_time_from_json(*it);
      if (lt.to_utc() != r.created_utc) throw FormatError("local_time does not reproduce created_utc");
      precomputed.emplace(r.id, lt);
    }
  });
  BinnedCorpus corpus;
  corpus.report.parsed = parsed.size();
  corpus.report.skipped_lines = parsed.skipped_lines;
  corpus.warnings = parsed.warnings;

  FilterResult filtered = filter_records(parsed, opts.policy);
  corpus.report.filter = filtered.report;

  std::vector<SubmissionRecord> kept;
  for (auto& r : filtered.records.records) {
    BinnedRecord b;
    b.id = r.id;
    b.country = r.country;
    b.city = r.city;
    b.lat = r.lat;
    b.lon = r.lon;
    b.tzid = r.tzid;
    b.sentiment = r.sentiment_compound;
    if (auto it = precomputed.find(r.id); it != precomputed.end()) {
      b.local = it->second;
    } else if (opts.geo) {
      auto loc = resolve_location(r, *opts.geo);
      if (!loc || loc->tzid.empty()) {
        ++corpus.report.no_local_time;
        continue;
      }
      b.country = loc->country;
      b.city = loc->city;
      b.lat = loc->lat;
      b.lon = loc->lon;
      b.tzid = loc->tzid;
      try {
        b.local = to_local_time(r.created_utc, loc->tzid, db);
      } catch (const UnknownTimeZone& e) {
        ++corpus.report.no_local_time;
        corpus.warnings.push_back("record " + r.id + ": " + e.what());
        continue;
      }
    } else if (!r.tzid.empty()) {
      try {
        b.local = to_local_time(r.created_utc, r.tzid, db);
      } catch (const UnknownTimeZone& e) {
        ++corpus.report.no_local_time;
        corpus.warnings.push_back("record " + r.id + ": " + e.what());
        continue;
      }
    } else {
      ++corpus.report.no_local_time;
      continue;
    }
    corpus.records.push_back(std::move(b));
    kept.push_back(std::move(r));
  }
  if (corpus.report.no_local_time) {
    corpus.warnings.push_back("excluded " + std::to_string(corpus.report.no_local_time) +
                              " records without a resolvable time zone");
  }
  EmbeddingMatrix emb = load_embeddings(embeddings_path, kept, opts.embeddings);
  corpus.embedding_dim = emb.d;
  corpus.warnings.insert(corpus.warnings.end(), emb.warnings.begin(), emb.warnings.end());
  corpus.report.binned = corpus.records.size();
  if (aligned) *aligned = std::move(emb);
  return corpus;
}

inline Json binned_corpus_to_json(const BinnedCorpus& c) {
  Json recs = Json::array();
  for (const auto& r : c.records) {
    Json j = {{"id", r.id}, {"country", r.country}, {"tzid", r.tzid}, {"local_time", local_time_to_json(r.local)}};
    if (!r.city.empty()) j["city"] = r.city;
    if (r.lat) j["lat"] = *r.lat;
    if (r.lon) j["lon"] = *r.lon;
    if (r.sentiment) j["sentiment_compound"] = *r.sentiment;
    recs.push_back(std::move(j));
  }
  Json cells = Json::array();
  const auto locals = c.local_times();
  for (const auto& [group, rows] : c.groups()) {
    const BinIndex idx = bin_rows(locals, rows, BinResolution::kMonthHour);
    for (const auto& [key, members] : idx.cells) {
      if (members.empty()) continue;
      cells.push_back({{"country", group}, {"month", key.month}, {"hour", key.hour}, {"rows", members}});
    }
  }
  return {{"format", "chronoseme-binned"},
          {"version", 1},
          {"resolution", "month_hour"},
          {"embedding_dim", c.embedding_dim},
          {"report", c.report.to_json()},
          {"warnings", c.warnings},
          {"records", recs},
          {"cells", cells}};
}

inline BinnedCorpus binned_corpus_from_json(const Json& j) {
  if (j.value("format", "") != "chronoseme-binned" || j.value("version", 0) != 1) {
    throw FormatError("not a chronoseme binned index (format/version mismatch)");
  }
  BinnedCorpus c;
  c.embedding_dim = j.value("embedding_dim", std::size_t{0});
  c.warnings = j.value("warnings", std::vector<std::string>{});
  const Json& rep = j.at("report");
  c.report.parsed = rep.value("parsed", std::size_t{0});
  c.report.skipped_lines = rep.value("skipped_lines", std::size_t{0});
  c.report.no_local_time = rep.value("no_local_time", std::size_t{0});
  c.report.binned = rep.value("binned", std::size_t{0});
  if (auto f = rep.find("filter"); f != rep.end()) {
    c.report.filter.input = f->value("input", std::size_t{0});
    c.report.filter.retained = f->value("retained", std::size_t{0});
    for (auto r : kFilterRuleOrder) {
      c.report.filter.removed[static_cast<std::size_t>(r)] =
          f->at("removed").value(std::string(rule_name(r)), std::size_t{0});
    }
  }
  for (const auto& rj : j.at("records")) {
    BinnedRecord r;
    r.id = rj.at("id").get<std::string>();
    r.country = rj.value("country", "");
    r.city = rj.value("city", "");
    r.tzid = rj.value("tzid", "");
    if (rj.contains("lat")) r.lat = rj.at("lat").get<double>();
    if (rj.contains("lon")) r.lon = rj.at("lon").get<double>();
    if (rj.contains("sentiment_compound")) r.sentiment = rj.at("sentiment_compound").get<double>();
    r.local = local_time_from_json(rj.at("local_time"));
    c.records.push_back(std::move(r));
  }
  return c;
}

inline void write_binned(const std::filesystem::path& path, const BinnedCorpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << binned_corpus_to_json(c).dump(1) << '\n';
}

inline BinnedCorpus read_binned(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read binned index " + path.string());
  try {
    return binned_corpus_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw FormatError("binned index " + path.string() + ": " + e.what());
  }
}

}  // namespace chronoseme
