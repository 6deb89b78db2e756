#include <sstream>

#include "test_util.hpp"

using namespace chronoseme;
using namespace chronoseme::testing;

namespace {

SubmissionRecord clean_record(const std::string& id, std::int64_t t) {
  SubmissionRecord r;
  r.id = id;
  r.created_utc = t;
  r.country = "GB";
  r.tzid = "Europe/London";
  r.title_text = "A clean post about gardening";
  r.author_name = "alice";
  r.subreddit = "gardening";
  r.lang_tag = "en";
  return r;
}

std::string jsonl(const std::vector<SubmissionRecord>& recs) {
  std::ostringstream s;
  write_records(s, recs);
  return s.str();
}

}  // namespace

TEST(ParseRecords, ThreeValidLines) {
  std::istringstream in(jsonl({clean_record("a", 1700000000), clean_record("b", 1700000100),
                               clean_record("c", 1700000200)}));
  const auto set = parse_records(in);
  EXPECT_EQ(set.size(), 3u);
  EXPECT_EQ(set.skipped_lines, 0u);
  EXPECT_TRUE(set.warnings.empty());
}

TEST(ParseRecords, InvalidJsonLineSkipped) {
  const std::string text = jsonl({clean_record("a", 1700000000)}) + "{not json\n" + jsonl({clean_record("c", 1700000200)});
  std::istringstream in(text);
  const auto set = parse_records(in);
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.skipped_lines, 1u);
  ASSERT_EQ(set.warnings.size(), 1u);
  EXPECT_NE(set.warnings[0].find(":2:"), std::string::npos);
}

TEST(ParseRecords, DuplicateIdIsFatal) {
  std::istringstream in(jsonl({clean_record("a", 1700000000), clean_record("a", 1700000100)}));
  EXPECT_THROW(parse_records(in), DuplicateIdError);
}

TEST(ParseRecords, FieldValidation) {
  std::istringstream in(
      "{\"id\":\"x\",\"created_utc\":-5}\n"
      "{\"id\":\"y\",\"created_utc\":1700000000,\"lat\":10}\n"
      "{\"id\":\"z\",\"created_utc\":1700000000,\"sentiment_compound\":1.5}\n"
      "{\"id\":\"w\",\"created_utc\":1700000000.5}\n"
      "{\"created_utc\":1700000000}\n"
      "\n"
      "{\"id\":\"ok\",\"created_utc\":1700000000}\n");
  const auto set = parse_records(in);
  EXPECT_EQ(set.size(), 1u);
  EXPECT_EQ(set.skipped_lines, 5u);
}

TEST(ParseRecords, RoundTripPreservesFields) {
  auto r = clean_record("rt", 1700000000);
  r.lat = 51.5;
  r.lon = -0.12;
  r.sentiment_compound = -0.25;
  r.url_domain = "bbc.co.uk";
  r.nsfw = true;
  std::istringstream in(jsonl({r}));
  const auto set = parse_records(in);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.records[0], r);
}

TEST(FilterRecords, RemovedContentIsEmpty) {
  auto r = clean_record("e", 1700000000);
  r.title_text = "";
  r.self_text = "[removed]";
  RecordSet set{{r}, 0, {}};
  const auto res = filter_records(set, FilterPolicy{});
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.report.removed_by(FilterRule::kEmpty), 1u);
}

TEST(FilterRecords, BotAuthorRemoved) {
  auto r = clean_record("b", 1700000000);
  r.author_name = "AutoModeratorBot";
  RecordSet set{{r}, 0, {}};
  const auto res = filter_records(set, FilterPolicy{});
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.report.removed_by(FilterRule::kBot), 1u);
}

TEST(FilterRecords, CleanRecordRetained) {
  RecordSet set{{clean_record("c", 1700000000)}, 0, {}};
  const auto res = filter_records(set, FilterPolicy{});
  EXPECT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.report.retained, 1u);
}

TEST(FilterRecords, FirstRuleFiresAttribution) {
  auto r = clean_record("multi", 1700000000);
  r.nsfw = true;
  r.is_ad = true;
  r.author_name = "spambot";
  r.lang_tag = "de";
  RecordSet set{{r}, 0, {}};
  const auto res = filter_records(set, FilterPolicy{});
  EXPECT_EQ(res.report.removed_by(FilterRule::kNsfw), 1u);
  EXPECT_EQ(res.report.removed_by(FilterRule::kAd), 0u);
  EXPECT_EQ(res.report.removed_by(FilterRule::kBot), 0u);
}

TEST(FilterRecords, SubsetAndIdempotent) {
  std::vector<SubmissionRecord> recs;
  for (int i = 0; i < 20; ++i) {
    auto r = clean_record("r" + std::to_string(i), 1700000000 + i);
    if (i % 3 == 0) r.nsfw = true;
    if (i % 5 == 0) r.lang_tag = "fr";
    if (i % 7 == 0) r.author_name = "NewsBOT";
    recs.push_back(r);
  }
  RecordSet set{recs, 0, {}};
  const auto once = filter_records(set, FilterPolicy{});
  const auto twice = filter_records(once.records, FilterPolicy{});
  EXPECT_EQ(once.records.records, twice.records.records);
  std::size_t removed = 0;
  for (auto c : once.report.removed) removed += c;
  EXPECT_EQ(once.report.retained + removed, once.report.input);
  for (const auto& r : once.records.records) {
    EXPECT_NE(std::find(recs.begin(), recs.end(), r), recs.end());
  }
}

TEST(FilterPolicy, JsonRoundTrip) {
  FilterPolicy p;
  p.drop_nsfw = false;
  p.bot_name_patterns = {"bot", "auto"};
  p.require_lang.reset();
  const auto q = filter_policy_from_json(filter_policy_to_json(p));
  EXPECT_EQ(q.drop_nsfw, false);
  EXPECT_EQ(q.bot_name_patterns, p.bot_name_patterns);
  EXPECT_FALSE(q.require_lang.has_value());
}

TEST(LoadEmbeddings, TwoUnitVectors) {
  TempDir dir("emb");
  const std::vector<SubmissionRecord> recs{clean_record("a", 1700000000), clean_record("b", 1700000001)};
  auto m = matrix(2, {{0.0, 1.0}, {1.0, 0.0}});
  m.ids = {"b", "a"};
  write_csem(dir / "e.csem", m);
  const auto emb = load_embeddings(dir / "e.csem", recs);
  EXPECT_EQ(emb.n, 2u);
  EXPECT_EQ(emb.d, 2u);
  EXPECT_EQ(emb.ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(emb.row(0)[0], 1.0);
  EXPECT_TRUE(emb.warnings.empty());
}

TEST(LoadEmbeddings, NonUnitRowIsFatal) {
  TempDir dir("emb");
  const std::vector<SubmissionRecord> recs{clean_record("a", 1700000000)};
  auto m = matrix(2, {{0.5, 0.0}});
  m.ids = {"a"};
  write_csem(dir / "e.csem", m);
  EXPECT_THROW(load_embeddings(dir / "e.csem", recs), CsemError);
  EmbeddingLoadOptions lax;
  lax.require_unit_norm = false;
  EXPECT_NO_THROW(load_embeddings(dir / "e.csem", recs, lax));
}

TEST(LoadEmbeddings, OrphanRowDroppedWithWarning) {
  TempDir dir("emb");
  const std::vector<SubmissionRecord> recs{clean_record("a", 1700000000)};
  auto m = matrix(2, {{1.0, 0.0}, {0.0, 1.0}});
  m.ids = {"a", "orphan"};
  write_csem(dir / "e.csem", m);
  const auto emb = load_embeddings(dir / "e.csem", recs);
  EXPECT_EQ(emb.n, 1u);
  EXPECT_EQ(emb.warnings.size(), 1u);
}

TEST(LoadEmbeddings, MissingRowAndBadMagic) {
  TempDir dir("emb");
  const std::vector<SubmissionRecord> recs{clean_record("a", 1700000000), clean_record("b", 1700000001)};
  auto m = matrix(2, {{1.0, 0.0}});
  m.ids = {"a"};
  write_csem(dir / "e.csem", m);
  EXPECT_THROW(load_embeddings(dir / "e.csem", recs), CsemError);
  write_text(dir / "bad.csem", "NOPE0000");
  EXPECT_THROW(read_csem(dir / "bad.csem"), CsemError);
  std::string truncated = read_text(dir / "e.csem");
  truncated.resize(truncated.size() - 3);
  write_text(dir / "short.csem", truncated);
  EXPECT_THROW(read_csem(dir / "short.csem"), CsemError);
}

TEST(Csem, RoundTripIsFloat32Exact) {
  std::stringstream s;
  auto m = matrix(3, {{0.1, 0.2, 0.3}, {-1.0, 0.0, 2.5}});
  write_csem(s, m);
  const auto back = read_csem(s);
  ASSERT_EQ(back.n, 2u);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    EXPECT_EQ(back.data[i], static_cast<double>(static_cast<float>(m.data[i])));
  }
  EXPECT_EQ(back.ids, m.ids);
}

TEST(BinByHour, FloorsToHour) {
  const LocalTime lt{CivilDateTime{2024, 3, 2, 4, 59, 59}, 0, false};
  const auto idx = bin_by_hour(std::span<const LocalTime>(&lt, 1), BinResolution::kHour);
  EXPECT_EQ(idx.at(0, 4), (std::vector<std::size_t>{0}));
}

TEST(BinByHour, MonthHourCell) {
  const LocalTime lt{CivilDateTime{2024, 7, 15, 23, 30, 0}, 3600, true};
  const auto idx = bin_by_hour(std::span<const LocalTime>(&lt, 1), BinResolution::kMonthHour);
  EXPECT_EQ(idx.at(7, 23), (std::vector<std::size_t>{0}));
  EXPECT_EQ(idx.total(), 1u);
}

TEST(BinByHour, EmptyInputGivesAllEmptyCells) {
  const auto idx = bin_by_hour(std::span<const LocalTime>(), BinResolution::kMonthHour);
  EXPECT_EQ(idx.cells.size(), 12u * 24u);
  EXPECT_EQ(idx.total(), 0u);
  const auto hourly = bin_by_hour(std::span<const LocalTime>(), BinResolution::kHour);
  EXPECT_EQ(hourly.cells.size(), 24u);
}

TEST(BinByHour, PartitionProperty) {
  std::vector<LocalTime> times;
  CounterRng rng(5, 0);
  for (int i = 0; i < 500; ++i) times.push_back(to_local_time(1704067200 + static_cast<std::int64_t>(rng.below(366 * 86400)), "America/New_York", tz_db()));
  const auto idx = bin_by_hour(times, BinResolution::kMonthHour);
  EXPECT_EQ(idx.total(), times.size());
  std::vector<int> seen(times.size(), 0);
  for (const auto& [key, rows] : idx.cells) {
    for (auto r : rows) {
      ++seen[r];
      EXPECT_EQ(static_cast<int>(times[r].local.month), key.month);
      EXPECT_EQ(static_cast<int>(times[r].local.hour), key.hour);
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Ingest, AlignsFiltersAndRoundTrips) {
  TempDir dir("ingest");
  std::vector<SubmissionRecord> recs;
  EmbeddingMatrix m;
  m.d = 2;
  for (int i = 0; i < 6; ++i) {
    auto r = clean_record("p" + std::to_string(i), utc(2024, 7, 1, 12) + i * 3600);
    if (i == 2) r.nsfw = true;
    if (i == 4) r.tzid.clear();
    recs.push_back(r);
  }
  for (int i = 5; i >= 0; --i) {
    m.ids.push_back("p" + std::to_string(i));
    m.data.insert(m.data.end(), {std::cos(i * 0.3), std::sin(i * 0.3)});
  }
  m.n = 6;
  write_records(dir / "r.jsonl", recs);
  write_csem(dir / "e.csem", m);
  EmbeddingMatrix aligned;
  const auto corpus = ingest(dir / "r.jsonl", dir / "e.csem", IngestOptions{}, tz_db(), &aligned);
  EXPECT_EQ(corpus.report.parsed, 6u);
  EXPECT_EQ(corpus.report.filter.removed_by(FilterRule::kNsfw), 1u);
  EXPECT_EQ(corpus.report.no_local_time, 1u);
  ASSERT_EQ(corpus.records.size(), 4u);
  ASSERT_EQ(aligned.n, 4u);
  for (std::size_t i = 0; i < corpus.records.size(); ++i) EXPECT_EQ(aligned.ids[i], corpus.records[i].id);
  EXPECT_EQ(corpus.records[0].local.local.hour, 13u);  // BST

  write_binned(dir / "b.idx", corpus);
  const auto back = read_binned(dir / "b.idx");
  ASSERT_EQ(back.records.size(), corpus.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].id, corpus.records[i].id);
    EXPECT_EQ(back.records[i].local.to_utc(), corpus.records[i].local.to_utc());
  }
}
