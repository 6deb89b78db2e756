#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "chronoseme/common.hpp"

namespace chronoseme {

using Json = nlohmann::json;

class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

struct SubmissionRecord {
  std::string id;
  std::int64_t created_utc = 0;
  std::string country;  // ISO-3166 alpha-2
  std::string city;
  std::optional<double> lat;
  std::optional<double> lon;
  std::string tzid;
  std::string title_text;
  std::string self_text;
  bool nsfw = false;
  bool is_ad = false;
  std::string author_name;
  std::string subreddit;
  std::string url_domain;
  std::string lang_tag;
  std::optional<double> sentiment_compound;

  std::string text() const {
    if (title_text.empty()) return self_text;
    if (self_text.empty()) return title_text;
    return title_text + "\n" + self_text;
  }

  bool operator==(const SubmissionRecord&) const = default;
};

struct RecordSet {
  std::vector<SubmissionRecord> records;
  std::size_t skipped_lines = 0;
  std::vector<std::string> warnings;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Throws FormatError describing the first violated invariant.
inline void validate_record(const SubmissionRecord& r) {
  if (r.id.empty()) throw FormatError("record id is empty");
  if (r.created_utc <= 0) throw FormatError("record " + r.id + ": created_utc must be positive");
  if (r.lat.has_value() != r.lon.has_value()) throw FormatError("record " + r.id + ": lat and lon must be given together");
  if (r.lat && (!(*r.lat >= -90.0 && *r.lat <= 90.0) || !(*r.lon >= -180.0 && *r.lon <= 180.0))) {
    throw FormatError("record " + r.id + ": coordinates out of range");
  }
  if (r.sentiment_compound && !(*r.sentiment_compound >= -1.0 && *r.sentiment_compound <= 1.0)) {
    throw FormatError("record " + r.id + ": sentiment_compound outside [-1, 1]");
  }
}

namespace detail {

inline std::string opt_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  if (!it->is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

inline bool opt_bool(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return false;
  if (!it->is_boolean()) throw FormatError(std::string("field '") + key + "' must be a boolean");
  return it->get<bool>();
}

inline std::optional<double> opt_number(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (!it->is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

}  // namespace detail

inline SubmissionRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("record is not a JSON object");
  SubmissionRecord r;
  r.id = detail::opt_string(j, "id");
  auto ts = j.find("created_utc");
  if (ts == j.end() || !ts->is_number()) throw FormatError("created_utc missing or not a number");
  if (ts->is_number_float()) {
    const double v = ts->get<double>();
    if (!std::isfinite(v) || v != std::floor(v)) throw FormatError("created_utc must be whole seconds");
    r.created_utc = static_cast<std::int64_t>(v);
  } else {
    r.created_utc = ts->get<std::int64_t>();
  }
  r.country = detail::opt_string(j, "country");
  r.city = detail::opt_string(j, "city");
  r.lat = detail::opt_number(j, "lat");
  r.lon = detail::opt_number(j, "lon");
  r.tzid = detail::opt_string(j, "tzid");
  r.title_text = detail::opt_string(j, "title_text");
  r.self_text = detail::opt_string(j, "self_text");
  r.nsfw = detail::opt_bool(j, "nsfw");
  r.is_ad = detail::opt_bool(j, "is_ad");
  r.author_name = detail::opt_string(j, "author_name");
  r.subreddit = detail::opt_string(j, "subreddit");
  r.url_domain = detail::opt_string(j, "url_domain");
  r.lang_tag = detail::opt_string(j, "lang_tag");
  r.sentiment_compound = detail::opt_number(j, "sentiment_compound");
  validate_record(r);
  return r;
}

// Absent optionals are omitted, never written as null.
inline Json record_to_json(const SubmissionRecord& r) {
  Json j = Json::object();
  j["id"] = r.id;
  j["created_utc"] = r.created_utc;
  if (!r.country.empty()) j["country"] = r.country;
  if (!r.city.empty()) j["city"] = r.city;
  if (r.lat) j["lat"] = *r.lat;
  if (r.lon) j["lon"] = *r.lon;
  if (!r.tzid.empty()) j["tzid"] = r.tzid;
  j["title_text"] = r.title_text;
  j["self_text"] = r.self_text;
  j["nsfw"] = r.nsfw;
  j["is_ad"] = r.is_ad;
  j["author_name"] = r.author_name;
  j["subreddit"] = r.subreddit;
  if (!r.url_domain.empty()) j["url_domain"] = r.url_domain;
  if (!r.lang_tag.empty()) j["lang_tag"] = r.lang_tag;
  if (r.sentiment_compound) j["sentiment_compound"] = *r.sentiment_compound;
  return j;
}

// Sees each accepted line's JSON; may throw to reject the line as malformed.
using RecordHook = std::function<void(const Json&, const SubmissionRecord&)>;

// Reads JSONL records. Malformed lines are skipped and counted; a repeated
// id is fatal. Blank lines are ignored.
inline RecordSet parse_records(std::istream& in, const std::string& source = "<stream>",
                               const RecordHook& hook = {}) {
  RecordSet set;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SubmissionRecord rec;
    Json parsed;
    try {
      parsed = Json::parse(line);
      rec = record_from_json(parsed);
    } catch (const std::exception& e) {
      ++set.skipped_lines;
      set.warnings.push_back(source + ":" + std::to_string(line_no) + ": skipped malformed record (" + e.what() + ")");
      continue;
    }
    if (!seen.insert(rec.id).second) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate record id '" + rec.id + "'");
    }
    if (hook) {
      try {
        hook(parsed, rec);
      } catch (const std::exception& e) {
        seen.erase(rec.id);
        ++set.skipped_lines;
        set.warnings.push_back(source + ":" + std::to_string(line_no) + ": skipped malformed record (" + e.what() + ")");
        continue;
      }
    }
    set.records.push_back(std::move(rec));
  }
  return set;
}

inline RecordSet parse_records(const std::filesystem::path& path, const RecordHook& hook = {}) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read records file " + path.string());
  return parse_records(in, path.string(), hook);
}

inline void write_records(std::ostream& out, const std::vector<SubmissionRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void write_records(const std::filesystem::path& path, const std::vector<SubmissionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write records file " + path.string());
  write_records(out, records);
}

}  // namespace chronoseme
