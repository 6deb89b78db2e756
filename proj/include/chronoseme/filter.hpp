#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chronoseme/records.hpp"

namespace chronoseme {

struct FilterPolicy {
  bool drop_empty = true;
  bool drop_nsfw = true;
  bool drop_ads = true;
  std::vector<std::string> bot_name_patterns{"bot"};
  std::vector<std::string> deleted_markers{"[deleted]", "[removed]"};
  std::optional<std::string> require_lang = std::string("en");

  void validate() const {
    if (drop_empty && deleted_markers.empty()) throw Error("filter policy: deleted_markers must be nonempty");
    for (const auto& p : bot_name_patterns) {
      if (p.empty()) throw Error("filter policy: empty bot name pattern");
    }
  }
};

// Rule order is fixed; each removed record is charged to the first rule
// that fires.
enum class FilterRule { kEmpty, kNsfw, kAd, kBot, kLang };
inline constexpr std::array<FilterRule, 5> kFilterRuleOrder{FilterRule::kEmpty, FilterRule::kNsfw, FilterRule::kAd,
                                                           FilterRule::kBot, FilterRule::kLang};

inline std::string_view rule_name(FilterRule r) {
  switch (r) {
    case FilterRule::kEmpty: return "empty";
    case FilterRule::kNsfw: return "nsfw";
    case FilterRule::kAd: return "ad";
    case FilterRule::kBot: return "bot";
    case FilterRule::kLang: return "lang";
  }
  return "?";
}

struct FilterReport {
  std::size_t input = 0;
  std::size_t retained = 0;
  std::array<std::size_t, 5> removed{};

  std::size_t removed_by(FilterRule r) const { return removed[static_cast<std::size_t>(r)]; }

  Json to_json() const {
    Json j = {{"input", input}, {"retained", retained}};
    Json rm = Json::object();
    for (auto r : kFilterRuleOrder) rm[std::string(rule_name(r))] = removed_by(r);
    j["removed"] = rm;
    return j;
  }
};

inline FilterPolicy filter_policy_from_json(const Json& j) {
  FilterPolicy p;
  p.drop_empty = j.value("drop_empty", p.drop_empty);
  p.drop_nsfw = j.value("drop_nsfw", p.drop_nsfw);
  p.drop_ads = j.value("drop_ads", p.drop_ads);
  p.bot_name_patterns = j.value("bot_name_patterns", p.bot_name_patterns);
  p.deleted_markers = j.value("deleted_markers", p.deleted_markers);
  if (auto it = j.find("require_lang"); it != j.end()) {
    if (it->is_null()) {
      p.require_lang.reset();
    } else {
      p.require_lang = it->get<std::string>();
    }
  }
  p.validate();
  return p;
}

inline Json filter_policy_to_json(const FilterPolicy& p) {
  Json j = {{"drop_empty", p.drop_empty},
            {"drop_nsfw", p.drop_nsfw},
            {"drop_ads", p.drop_ads},
            {"bot_name_patterns", p.bot_name_patterns},
            {"deleted_markers", p.deleted_markers}};
  j["require_lang"] = p.require_lang ? Json(*p.require_lang) : Json(nullptr);
  return j;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// A text part counts as absent when blank or equal to a deletion marker.
inline bool is_absent_text(std::string_view s, const std::vector<std::string>& markers) {
  s = trim(s);
  if (s.empty()) return true;
  for (const auto& m : markers) {
    if (s == m) return true;
  }
  return false;
}

}  // namespace detail

inline std::optional<FilterRule> first_rule_fired(const SubmissionRecord& r, const FilterPolicy& policy) {
  if (policy.drop_empty && detail::is_absent_text(r.title_text, policy.deleted_markers) &&
      detail::is_absent_text(r.self_text, policy.deleted_markers)) {
    return FilterRule::kEmpty;
  }
  if (policy.drop_nsfw && r.nsfw) return FilterRule::kNsfw;
  if (policy.drop_ads && r.is_ad) return FilterRule::kAd;
  if (!policy.bot_name_patterns.empty()) {
    const std::string author = to_lower(r.author_name);
    for (const auto& p : policy.bot_name_patterns) {
      if (author.find(to_lower(p)) != std::string::npos) return FilterRule::kBot;
    }
  }
  if (policy.require_lang && r.lang_tag != *policy.require_lang) return FilterRule::kLang;
  return std::nullopt;
}

struct FilterResult {
  RecordSet records;
  FilterReport report;
};

inline FilterResult filter_records(const RecordSet& input, const FilterPolicy& policy) {
  policy.validate();
  FilterResult out;
  out.records.skipped_lines = input.skipped_lines;
  out.records.warnings = input.warnings;
  out.report.input = input.size();
  for (const auto& r : input.records) {
    if (auto rule = first_rule_fired(r, policy)) {
      ++out.report.removed[static_cast<std::size_t>(*rule)];
    } else {
      out.records.records.push_back(r);
    }
  }
  out.report.retained = out.records.size();
  return out;
}

}  // namespace chronoseme
