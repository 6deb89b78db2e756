#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chronoseme/binning.hpp"
#include "chronoseme/common.hpp"
#include "chronoseme/cosinor.hpp"
#include "chronoseme/csv.hpp"
#include "chronoseme/entropy.hpp"
#include "chronoseme/filter.hpp"
#include "chronoseme/geo.hpp"
#include "chronoseme/heatmap.hpp"
#include "chronoseme/rhythm.hpp"
#include "chronoseme/scaling.hpp"
#include "chronoseme/solar.hpp"
#include "chronoseme/svg.hpp"
#include "chronoseme/tz.hpp"

namespace chronoseme {

inline KnnBackend parse_knn_backend(std::string_view s) {
  if (s == "brute" || s == "brute_force") return KnnBackend::kBruteForce;
  if (s == "vptree" || s == "vp_tree") return KnnBackend::kVpTree;
  throw Error("unknown knn backend '" + std::string(s) + "'");
}
inline std::string_view knn_backend_name(KnnBackend b) { return b == KnnBackend::kBruteForce ? "brute" : "vptree"; }

enum class FdrFamily { kPerStatistic, kAll };

inline FdrFamily parse_fdr_family(std::string_view s) {
  if (s == "per_statistic") return FdrFamily::kPerStatistic;
  if (s == "all") return FdrFamily::kAll;
  throw Error("unknown fdr family '" + std::string(s) + "'");
}
inline std::string_view fdr_family_name(FdrFamily f) { return f == FdrFamily::kAll ? "all" : "per_statistic"; }

struct RunConfig {
  std::filesystem::path records;
  std::filesystem::path embeddings;
  std::filesystem::path geotables;  // optional
  std::filesystem::path reference;  // optional hour,value CSV
  std::filesystem::path out_dir = "chronoseme_out";
  std::string group_key = "country";  // "country" or "none"
  FilterPolicy policy;
  bool require_unit_norm = true;
  double norm_tolerance = 1e-3;
  std::size_t k = 10;
  double epsilon = 1e-6;
  std::size_t n_min = 25;
  OutlierPolicy outlier = OutlierPolicy::kIqr;
  KnnBackend knn_backend = KnnBackend::kBruteForce;
  HourWindow peak_window{0, 12};
  HourWindow trough_window{12, 24};
  FdrFamily fdr_family = FdrFamily::kPerStatistic;
  CellOrdering ordering = CellOrdering::kChronological;
  Cumulation cumulation = Cumulation::kSum;
  bool magnitude = true;
  double split = 0.15;
  SplitBasis split_basis = SplitBasis::kPosts;
  bool clustering = true;
  double cluster_eps = 0.4;
  std::size_t min_pts = 15;
  KnnBackend cluster_backend = KnnBackend::kVpTree;
  std::size_t powerlaw_xmin = 2;
  std::uint64_t seed = 42;

  void validate() const {
    if (records.empty() || !std::filesystem::exists(records)) throw Error("config: records file not found: " + records.string());
    if (embeddings.empty() || !std::filesystem::exists(embeddings)) {
      throw Error("config: embeddings file not found: " + embeddings.string());
    }
    if (!geotables.empty() && !std::filesystem::exists(geotables)) {
      throw Error("config: geotables file not found: " + geotables.string());
    }
    if (!reference.empty() && !std::filesystem::exists(reference)) {
      throw Error("config: reference file not found: " + reference.string());
    }
    if (group_key != "country" && group_key != "none") throw Error("config: group_key must be 'country' or 'none'");
    if (k < 1) throw Error("config: k must be >= 1");
    if (!(epsilon >= 0.0)) throw Error("config: epsilon must be >= 0");
    if (!(split > 0.0 && split < 1.0)) throw Error("config: split must be in (0, 1)");
    if (!(cluster_eps > 0.0) || min_pts < 1) throw Error("config: cluster_eps > 0 and min_pts >= 1 required");
    policy.validate();
  }
};

inline Json window_to_json(const HourWindow& w) { return Json::array({w.start, w.end}); }
inline HourWindow window_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("config: hour window must be [start, end]");
  return {j[0].get<int>(), j[1].get<int>()};
}

// Every field is written, defaults included.
inline Json run_config_to_json(const RunConfig& c) {
  return {{"records", c.records.string()},
          {"embeddings", c.embeddings.string()},
          {"geotables", c.geotables.string()},
          {"reference", c.reference.string()},
          {"out_dir", c.out_dir.string()},
          {"group_key", c.group_key},
          {"policy", filter_policy_to_json(c.policy)},
          {"require_unit_norm", c.require_unit_norm},
          {"norm_tolerance", c.norm_tolerance},
          {"k", c.k},
          {"epsilon", c.epsilon},
          {"n_min", c.n_min},
          {"outlier", std::string(outlier_policy_name(c.outlier))},
          {"knn_backend", std::string(knn_backend_name(c.knn_backend))},
          {"peak_window", window_to_json(c.peak_window)},
          {"trough_window", window_to_json(c.trough_window)},
          {"fdr_family", std::string(fdr_family_name(c.fdr_family))},
          {"ordering", std::string(ordering_name(c.ordering))},
          {"cumulation", std::string(cumulation_name(c.cumulation))},
          {"magnitude", c.magnitude},
          {"split", c.split},
          {"split_basis", std::string(split_basis_name(c.split_basis))},
          {"clustering", c.clustering},
          {"cluster_eps", c.cluster_eps},
          {"min_pts", c.min_pts},
          {"cluster_backend", std::string(knn_backend_name(c.cluster_backend))},
          {"powerlaw_xmin", c.powerlaw_xmin},
          {"seed", c.seed}};
}

// Missing keys keep their defaults; a "policy" value may be an inline
// object or a path to a policy file. Unknown keys are rejected.
inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base = {}) {
  static const std::set<std::string> known{
      "records",  "embeddings",  "geotables",     "reference",   "out_dir",    "group_key",   "policy",
      "require_unit_norm", "norm_tolerance", "k", "epsilon", "n_min", "outlier", "knn_backend", "peak_window",
      "trough_window", "fdr_family", "ordering", "cumulation", "magnitude", "split", "split_basis", "clustering",
      "cluster_eps", "min_pts", "cluster_backend", "powerlaw_xmin", "seed"};
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error("config: unknown key '" + key + "'");
  }
  auto path = [&](const char* key, std::filesystem::path& dst) {
    if (auto it = j.find(key); it != j.end()) {
      std::filesystem::path p = it->get<std::string>();
      dst = (p.empty() || p.is_absolute() || base.empty()) ? p : base / p;
    }
  };
  RunConfig c;
  path("records", c.records);
  path("embeddings", c.embeddings);
  path("geotables", c.geotables);
  path("reference", c.reference);
  path("out_dir", c.out_dir);
  c.group_key = j.value("group_key", c.group_key);
  if (auto it = j.find("policy"); it != j.end()) {
    if (it->is_string()) {
      std::filesystem::path p = it->get<std::string>();
      if (!p.is_absolute() && !base.empty()) p = base / p;
      std::ifstream in(p);
      if (!in) throw Error("config: cannot read policy file " + p.string());
      c.policy = filter_policy_from_json(Json::parse(in));
    } else {
      c.policy = filter_policy_from_json(*it);
    }
  }
  c.require_unit_norm = j.value("require_unit_norm", c.require_unit_norm);
  c.norm_tolerance = j.value("norm_tolerance", c.norm_tolerance);
  c.k = j.value("k", c.k);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.n_min = j.value("n_min", c.n_min);
  if (j.contains("outlier")) c.outlier = parse_outlier_policy(j.at("outlier").get<std::string>());
  if (j.contains("knn_backend")) c.knn_backend = parse_knn_backend(j.at("knn_backend").get<std::string>());
  if (j.contains("peak_window")) c.peak_window = window_from_json(j.at("peak_window"));
  if (j.contains("trough_window")) c.trough_window = window_from_json(j.at("trough_window"));
  if (j.contains("fdr_family")) c.fdr_family = parse_fdr_family(j.at("fdr_family").get<std::string>());
  if (j.contains("ordering")) c.ordering = parse_ordering(j.at("ordering").get<std::string>());
  if (j.contains("cumulation")) c.cumulation = parse_cumulation(j.at("cumulation").get<std::string>());
  c.magnitude = j.value("magnitude", c.magnitude);
  c.split = j.value("split", c.split);
  if (j.contains("split_basis")) c.split_basis = parse_split_basis(j.at("split_basis").get<std::string>());
  c.clustering = j.value("clustering", c.clustering);
  c.cluster_eps = j.value("cluster_eps", c.cluster_eps);
  c.min_pts = j.value("min_pts", c.min_pts);
  if (j.contains("cluster_backend")) c.cluster_backend = parse_knn_backend(j.at("cluster_backend").get<std::string>());
  c.powerlaw_xmin = j.value("powerlaw_xmin", c.powerlaw_xmin);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Accepts a run config or a previous run's manifest (its "config" block).
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  if (j.contains("config") && j.contains("tool_version")) return run_config_from_json(j.at("config"));
  return run_config_from_json(j, path.parent_path());
}

struct RunManifest {
  Json config;
  std::string tool_version{kToolVersion};
  std::string tz_version;
  std::string status = "ok";
  std::string failed_stage;
  std::string error;
  Json counts = Json::object();
  std::vector<std::string> warnings;
  std::map<std::string, std::string> outputs;  // relative path -> FNV-1a 64 digest

  Json to_json() const {
    Json out_files = Json::object();
    for (const auto& [k, v] : outputs) out_files[k] = v;
    Json j = {{"tool", "chronoseme"},
              {"tool_version", tool_version},
              {"tz_version", tz_version},
              {"status", status},
              {"config", config},
              {"counts", counts},
              {"warnings", warnings},
              {"outputs", out_files},
              {"deviations",
               {{"clustering", "DBSCAN substitutes for HDBSCAN; labels canonicalized by first occurrence"},
                {"projection", "PCA 2-D substitutes for t-SNE"}}}};
    if (status != "ok") {
      j["failed_stage"] = failed_stage;
      j["error"] = error;
    }
    return j;
  }
};

inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what) : Error(stage + " stage: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Per-group analysis results kept between stages.
struct GroupResult {
  std::string name;
  std::vector<std::size_t> rows;
  Aggregation local;
  HeatmapGrid global_grid;     // month x hour
  HeatmapGrid global_profile;  // pooled by hour
  HeatmapGrid count_grid;
  HeatmapGrid count_profile;
  std::optional<Aggregation> sentiment;
  std::optional<CosinorFit> local_fit;
  std::optional<CosinorFit> global_fit;
  std::vector<MonthlySolar> solar;
};

namespace detail {

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "_" : out;
}

inline Json optional_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json correlation_to_json(const CorrelationResult& c) {
  return {{"r", optional_json(c.r)},
          {"p", optional_json(c.p)},
          {"n", c.n},
          {"slope", optional_json(c.slope)},
          {"intercept", optional_json(c.intercept)},
          {"x_mean", optional_json(c.x_mean)},
          {"sxx", optional_json(c.sxx)},
          {"residual_se", optional_json(c.residual_se)},
          {"t_crit", optional_json(c.t_crit)}};
}

inline Json cosinor_to_json(const CosinorFit& f) {
  return {{"mesor", optional_json(f.mesor)},         {"beta_cos", optional_json(f.beta_cos)},
          {"beta_sin", optional_json(f.beta_sin)},   {"amplitude", optional_json(f.amplitude)},
          {"acrophase_h", optional_json(f.acrophase_h)}, {"r2", optional_json(f.r2)},
          {"rss_full", optional_json(f.rss_full)},   {"rss_null", optional_json(f.rss_null)},
          {"n_points", f.n_points},                  {"p_lr", optional_json(f.p_lr)},
          {"p_fdr", optional_json(f.p_fdr)}};
}

inline Json segment_to_json(const SegmentFit& s) {
  return {{"split_fraction", s.split_fraction},
          {"split_basis", std::string(split_basis_name(s.basis))},
          {"early_slope", optional_json(s.early_slope)},
          {"late_slope", optional_json(s.late_slope)},
          {"early_intercept", optional_json(s.early.intercept)},
          {"late_intercept", optional_json(s.late.intercept)},
          {"early_r2", optional_json(s.early.r2)},
          {"late_r2", optional_json(s.late.r2)},
          {"early_mean_gain", optional_json(s.early_mean_gain)},
          {"late_mean_gain", optional_json(s.late_mean_gain)},
          {"reduction", optional_json(s.reduction)},
          {"early_points", s.early_points},
          {"late_points", s.late_points},
          {"early_excluded_nonpositive", s.early_excluded},
          {"late_excluded_nonpositive", s.late_excluded}};
}

inline Json curve_to_json(const MarginalGainCurve& c) {
  Json pts = Json::array();
  for (const auto& p : c.points) {
    pts.push_back({{"month", p.month},
                   {"hour", p.hour},
                   {"cum_posts", p.cum_posts},
                   {"cum_entropy", optional_json(p.cum_entropy)},
                   {"marginal_gain", optional_json(p.marginal_gain)}});
  }
  return {{"ordering", std::string(ordering_name(c.ordering))},
          {"cumulation", std::string(cumulation_name(c.cumulation))},
          {"magnitude", c.magnitude},
          {"points", pts}};
}

inline Json powerlaw_to_json(const PowerLawFit& f) {
  return {{"exponent", optional_json(f.exponent)}, {"intercept", optional_json(f.intercept)}, {"xmin", f.xmin},
          {"n_points", f.n_points}, {"r2", optional_json(f.r2)}, {"bin_x", f.bin_x}, {"bin_density", f.bin_density}};
}

// Counts as a grid: mean = n for populated cells.
inline HeatmapGrid count_grid(const BinIndex& bins, const std::string& name) {
  HeatmapGrid g = HeatmapGrid::make(name, bins.resolution == BinResolution::kHour);
  for (const auto& [key, rows] : bins.cells) {
    auto& c = g.at(key.month, key.hour);
    c.n = rows.size();
    if (c.n > 0) c.mean = static_cast<double>(c.n);
  }
  return g;
}

inline HeatmapGrid global_entropy_grid(const EmbeddingMatrix& emb, const BinIndex& bins, const GlobalEntropyOptions& opts,
                                       std::size_t threads, std::size_t* skipped) {
  HeatmapGrid g = HeatmapGrid::make("global_entropy", bins.resolution == BinResolution::kHour);
  std::vector<const std::pair<const BinKey, std::vector<std::size_t>>*> cells;
  for (const auto& kv : bins.cells) cells.push_back(&kv);
  std::vector<GlobalEntropyValue> values(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) { values[i] = global_entropy(emb, cells[i]->second, opts); }, threads);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& c = g.at(cells[i]->first.month, cells[i]->first.hour);
    c.n = values[i].n_samples;
    if (!values[i].skipped) {
      c.mean = values[i].h;
    } else if (skipped && values[i].n_samples > 0) {
      ++*skipped;
    }
  }
  return g;
}

inline std::int64_t modal_year(const std::vector<std::int64_t>& years) {
  std::map<std::int64_t, std::size_t> counts;
  for (auto y : years) ++counts[y];
  std::int64_t best = years.empty() ? 2024 : years.front();
  std::size_t best_n = 0;
  for (const auto& [y, n] : counts) {
    if (n > best_n) {
      best = y;
      best_n = n;
    }
  }
  return best;
}

}  // namespace detail

struct EntropyStageOptions {
  std::size_t k = 10;
  double epsilon = 1e-6;
  std::size_t n_min = 25;
  OutlierPolicy outlier = OutlierPolicy::kIqr;
  KnnBackend knn_backend = KnnBackend::kBruteForce;
  std::size_t threads = thread_count();
};

struct EntropyStage {
  std::vector<GroupResult> groups;
  std::vector<EntropyRow> table;  // entropy.csv rows
  Json counts = Json::object();
  std::vector<std::string> warnings;
};

// Local entropy per post (neighbors searched among the group's posts in the
// same local hour, pooled across months), global entropy per month x hour
// cell and per hour, counts, and sentiment when present.
inline EntropyStage compute_entropy(const BinnedCorpus& corpus, const EmbeddingMatrix& emb,
                                    const std::map<std::string, std::vector<std::size_t>>& groups,
                                    const EntropyStageOptions& opts) {
  if (corpus.records.empty()) throw DegenerateError("corpus is empty after filtering; nothing to analyze");
  if (emb.n != corpus.records.size()) throw Error("compute_entropy: embeddings are not aligned with the corpus");
  EntropyStage st;
  const auto locals = corpus.local_times();
  std::vector<double> h_local(corpus.records.size(), kNaN);
  std::size_t skipped_local = 0, duplicates = 0, skipped_global = 0;
  bool any_sentiment = false;
  std::vector<double> sentiment(corpus.records.size(), kNaN);
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (corpus.records[i].sentiment) {
      sentiment[i] = *corpus.records[i].sentiment;
      any_sentiment = true;
    }
  }
  LocalEntropyOptions lopts{opts.k, opts.knn_backend, opts.threads};
  GlobalEntropyOptions gopts{opts.epsilon, opts.n_min};
  for (const auto& [name, rows] : groups) {
    GroupResult g;
    g.name = name;
    g.rows = rows;
    const BinIndex hour_bins = bin_rows(locals, rows, BinResolution::kHour);
    const BinIndex month_bins = bin_rows(locals, rows, BinResolution::kMonthHour);
    for (const auto& [key, members] : hour_bins.cells) {
      if (members.empty()) continue;
      const auto v = local_entropy(emb, members, lopts);
      if (v.skipped) {
        ++skipped_local;
        st.warnings.push_back("group " + name + " hour " + std::to_string(key.hour) + ": " +
                              std::to_string(members.size()) + " posts <= k, local entropy skipped");
        continue;
      }
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (v.excluded_duplicate[i]) {
          ++duplicates;
        } else {
          h_local[members[i]] = v.h[i];
        }
      }
    }
    g.local = aggregate(h_local, month_bins, opts.outlier, "local_entropy");
    g.global_grid = detail::global_entropy_grid(emb, month_bins, gopts, opts.threads, &skipped_global);
    g.global_profile = detail::global_entropy_grid(emb, hour_bins, gopts, opts.threads, &skipped_global);
    g.count_grid = detail::count_grid(month_bins, "count");
    g.count_profile = detail::count_grid(hour_bins, "count");
    if (any_sentiment) g.sentiment = aggregate(sentiment, month_bins, OutlierPolicy::kNone, "sentiment");

    for (const auto* grid :
         {&g.local.profile, &g.local.grid, &g.global_profile, &g.global_grid, &g.count_profile, &g.count_grid}) {
      auto rows_out = rows_from_grid(name, *grid);
      st.table.insert(st.table.end(), rows_out.begin(), rows_out.end());
    }
    if (g.sentiment) {
      for (const auto* grid : {&g.sentiment->profile, &g.sentiment->grid}) {
        auto rows_out = rows_from_grid(name, *grid);
        st.table.insert(st.table.end(), rows_out.begin(), rows_out.end());
      }
    }
    st.groups.push_back(std::move(g));
  }
  if (duplicates) {
    st.warnings.push_back(std::to_string(duplicates) + " posts flagged excluded_duplicate (k-th distance below 1e-12)");
  }
  st.counts = {{"groups", st.groups.size()},   {"local_skipped_bins", skipped_local},
               {"excluded_duplicate", duplicates}, {"global_skipped_bins", skipped_global},
               {"k", opts.k},                   {"epsilon", opts.epsilon},
               {"n_min", opts.n_min}};
  return st;
}

// City sites per group: one site per located (city, lat, lon, tzid),
// weighted by its submission count, evaluated in the modal local year.
inline std::vector<CitySite> city_sites(const BinnedCorpus& corpus, const std::vector<std::size_t>& rows,
                                        const std::string& group) {
  std::map<std::tuple<std::string, double, double, std::string>, std::vector<std::int64_t>> sites;
  for (auto r : rows) {
    const auto& rec = corpus.records[r];
    if (!rec.lat || !rec.lon || rec.tzid.empty()) continue;
    sites[{rec.city, *rec.lat, *rec.lon, rec.tzid}].push_back(rec.local.local.year);
  }
  std::vector<CitySite> out;
  for (const auto& [key, years] : sites) {
    CitySite s;
    s.country = group;
    s.city = std::get<0>(key);
    s.lat = std::get<1>(key);
    s.lon = std::get<2>(key);
    s.tzid = std::get<3>(key);
    s.weight = static_cast<double>(years.size());
    s.year = detail::modal_year(years);
    out.push_back(std::move(s));
  }
  return out;
}

class Pipeline {
 public:
  Pipeline(RunConfig config, const TzDatabase& db) : cfg_(std::move(config)), db_(db) {
    // the output location is not part of the result, so it stays out of the snapshot
    manifest_.config = run_config_to_json(cfg_);
    manifest_.config.erase("out_dir");
    manifest_.tz_version = db_.version();
  }

  // Runs every stage into a staging directory and moves it into place.
  // On failure the staging directory is removed and out_dir holds only a
  // manifest naming the failed stage; the error is rethrown.
  RunManifest run() {
    namespace fs = std::filesystem;
    const fs::path out = cfg_.out_dir;
    const fs::path staging = out.parent_path() / (out.filename().string() + ".partial");
    prepare_out_dir(out);
    fs::remove_all(staging);
    fs::create_directories(staging);
    stage_dir_ = staging;
    std::string stage = "config";
    try {
      cfg_.validate();
      stage = "ingest";
      stage_ingest();
      stage = "entropy";
      stage_entropy();
      stage = "rhythm";
      stage_rhythm();
      stage = "scaling";
      stage_scaling();
      stage = "figures";
      stage_figures();
      stage = "manifest";
      write_text("manifest.json", manifest_.to_json().dump(2) + "\n", false);
      fs::remove_all(out);
      fs::rename(staging, out);
    } catch (const std::exception& e) {
      fs::remove_all(staging);
      manifest_.status = "failed";
      manifest_.failed_stage = stage;
      manifest_.error = e.what();
      manifest_.outputs.clear();
      fs::remove_all(out);
      fs::create_directories(out);
      std::ofstream mf(out / "manifest.json", std::ios::binary);
      mf << manifest_.to_json().dump(2) << '\n';
      throw PipelineError(stage, e.what());
    }
    return manifest_;
  }

  const RunManifest& manifest() const { return manifest_; }

 private:
  // Refuses to clobber a directory that does not look like a previous run.
  static void prepare_out_dir(const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    if (!fs::exists(out)) return;
    if (!fs::is_directory(out)) throw Error("output path exists and is not a directory: " + out.string());
    if (fs::is_empty(out) || fs::exists(out / "manifest.json")) return;
    throw Error("output directory " + out.string() + " is not empty and holds no previous run manifest");
  }

  void write_text(const std::string& rel, const std::string& text, bool record = true) {
    const auto path = stage_dir_ / rel;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("write failed for " + path.string());
    if (record) manifest_.outputs[rel] = fnv1a64_hex(text);
  }

  void warn(std::string w) { manifest_.warnings.push_back(std::move(w)); }

  void stage_ingest() {
    IngestOptions opts;
    opts.policy = cfg_.policy;
    opts.embeddings.require_unit_norm = cfg_.require_unit_norm;
    opts.embeddings.norm_tolerance = cfg_.norm_tolerance;
    if (!cfg_.geotables.empty()) {
      opts.geo = load_geo_tables(cfg_.geotables);
      opts.geo->validate(db_);
    }
    corpus_ = ingest(cfg_.records, cfg_.embeddings, opts, db_, &emb_);
    for (const auto& w : corpus_.warnings) warn(w);
    manifest_.counts["ingest"] = corpus_.report.to_json();
    locals_ = corpus_.local_times();
    if (cfg_.group_key == "none") {
      std::vector<std::size_t> all(corpus_.records.size());
      std::iota(all.begin(), all.end(), 0);
      if (!all.empty()) groups_["all"] = all;
    } else {
      groups_ = corpus_.groups();
    }
  }

  void stage_entropy() {
    EntropyStageOptions opts{cfg_.k, cfg_.epsilon, cfg_.n_min, cfg_.outlier, cfg_.knn_backend};
    EntropyStage st = compute_entropy(corpus_, emb_, groups_, opts);
    for (auto& w : st.warnings) warn(std::move(w));
    for (const auto& g : st.groups) {
      const std::string base = "heatmaps/" + detail::safe_name(g.name) + "_";
      auto heat = [&](const HeatmapGrid& grid, const std::string& stat) {
        std::ostringstream s;
        write_heatmap_csv(s, grid);
        write_text(base + stat + ".csv", s.str());
      };
      heat(g.local.grid, "local_entropy");
      heat(g.global_grid, "global_entropy");
      heat(g.count_grid, "count");
      try {
        heat(zscore_grid(g.global_grid), "global_entropy_z");
      } catch (const DegenerateError& e) {
        warn("group " + g.name + ": global entropy z-score skipped: " + e.what());
      }
      if (g.sentiment) heat(g.sentiment->grid, "sentiment");
    }
    std::ostringstream s;
    write_entropy_csv(s, st.table);
    write_text("entropy.csv", s.str());
    manifest_.counts["entropy"] = st.counts;
    results_ = std::move(st.groups);
  }

  void stage_rhythm() {
    std::vector<CosinorRow> local_rows, global_rows;
    for (auto& g : results_) {
      try {
        g.local_fit = fit_profile(g.local.profile);
        local_rows.push_back({g.name, *g.local_fit});
      } catch (const Error& e) {
        warn("group " + g.name + ": local entropy cosinor skipped: " + e.what());
      }
      try {
        g.global_fit = fit_profile(g.global_profile);
        global_rows.push_back({g.name, *g.global_fit});
      } catch (const Error& e) {
        warn("group " + g.name + ": global entropy cosinor skipped: " + e.what());
      }
    }
    if (cfg_.fdr_family == FdrFamily::kAll) {
      std::vector<CosinorRow> joint = local_rows;
      joint.insert(joint.end(), global_rows.begin(), global_rows.end());
      apply_fdr(joint);
      for (std::size_t i = 0; i < local_rows.size(); ++i) local_rows[i].fit.p_fdr = joint[i].fit.p_fdr;
      for (std::size_t i = 0; i < global_rows.size(); ++i) global_rows[i].fit.p_fdr = joint[local_rows.size() + i].fit.p_fdr;
    } else {
      apply_fdr(local_rows);
      apply_fdr(global_rows);
    }
    for (auto& g : results_) {
      for (const auto& r : local_rows) {
        if (r.group == g.name) g.local_fit = r.fit;
      }
      for (const auto& r : global_rows) {
        if (r.group == g.name) g.global_fit = r.fit;
      }
    }
    std::ostringstream a, b;
    write_cosinor_csv(a, local_rows);
    write_cosinor_csv(b, global_rows);
    write_text("cosinor.csv", a.str());
    write_text("cosinor_global.csv", b.str());

    std::vector<ReferencePoint> reference;
    if (!cfg_.reference.empty()) reference = read_reference_csv(cfg_.reference);

    Json corr = Json::object();
    for (auto& g : results_) {
      Json gj = Json::object();
      if (g.local_fit) gj["cosinor_local"] = detail::cosinor_to_json(*g.local_fit);
      if (g.global_fit) gj["cosinor_global"] = detail::cosinor_to_json(*g.global_fit);
      const auto pt = extract_peak_trough(g.local.grid, cfg_.peak_window, cfg_.trough_window);
      Json ptj = Json::array();
      for (const auto& r : pt.rows) {
        ptj.push_back({{"month", r.month}, {"peak_hour", r.peak_hour}, {"trough_hour", r.trough_hour},
                       {"peak_value", r.peak_value}, {"trough_value", r.trough_value}});
      }
      gj["peak_trough"] = {{"peak_window", window_to_json(cfg_.peak_window)},
                           {"trough_window", window_to_json(cfg_.trough_window)},
                           {"months", ptj}};
      const auto sites = city_sites(corpus_, g.rows, g.name);
      if (!sites.empty()) {
        auto profile = monthly_solar_profile(sites, db_);
        if (auto it = profile.find(g.name); it != profile.end()) g.solar = it->second;
        Json sj = Json::array();
        for (const auto& m : g.solar) {
          sj.push_back({{"month", m.month}, {"sunrise_mean", m.sunrise_mean}, {"sunrise_sd", m.sunrise_sd},
                        {"sunset_mean", m.sunset_mean}, {"sunset_sd", m.sunset_sd}, {"n_cities", m.n_cities}});
        }
        gj["solar"] = sj;
        try {
          const auto sc = seasonal_correlation(pt, g.solar);
          gj["sunrise_vs_peak"] = detail::correlation_to_json(sc.sunrise_vs_peak);
          gj["sunset_vs_trough"] = detail::correlation_to_json(sc.sunset_vs_trough);
        } catch (const Error& e) {
          warn("group " + g.name + ": seasonal correlation skipped: " + e.what());
        }
      }
      if (g.sentiment) {
        try {
          gj["sentiment_vs_local_entropy"] = detail::correlation_to_json(grid_correlation(g.sentiment->grid, g.local.grid));
        } catch (const Error& e) {
          warn("group " + g.name + ": sentiment correlation skipped: " + e.what());
        }
      }
      if (!reference.empty()) {
        try {
          gj["external_reference"] = detail::correlation_to_json(compare_external(g.local.profile.row_means(0), reference));
        } catch (const Error& e) {
          warn("group " + g.name + ": external comparison skipped: " + e.what());
        }
      }
      corr[g.name] = gj;
    }
    write_text("correlations.json", corr.dump(2) + "\n");
    manifest_.counts["rhythm"] = {{"cosinor_local_rows", local_rows.size()}, {"cosinor_global_rows", global_rows.size()}};
  }

  void stage_scaling() {
    Json sj = Json::object();
    Json groups = Json::object();
    for (auto& g : results_) {
      Json gj = Json::object();
      try {
        gj["volume_entropy"] = detail::correlation_to_json(volume_entropy_correlation(g.count_grid, g.global_grid));
      } catch (const Error& e) {
        warn("group " + g.name + ": volume/entropy correlation skipped: " + e.what());
      }
      try {
        MarginalGainOptions mo{cfg_.ordering, cfg_.cumulation, cfg_.magnitude};
        HeatmapGrid entropy_grid = g.global_grid;
        if (cfg_.cumulation == Cumulation::kLevel) {
          const BinIndex month_bins = bin_rows(locals_, g.rows, BinResolution::kMonthHour);
          entropy_grid = accumulated_entropy_grid(emb_, month_bins, g.count_grid, cfg_.ordering,
                                                  GlobalEntropyOptions{cfg_.epsilon, cfg_.n_min});
        }
        g_curves_[g.name] = marginal_gain(g.count_grid, entropy_grid, mo);
        gj["marginal_gain"] = detail::curve_to_json(g_curves_[g.name]);
        try {
          g_segments_[g.name] = segment_fit(g_curves_[g.name], cfg_.split, cfg_.split_basis);
          gj["segment_fit"] = detail::segment_to_json(g_segments_[g.name]);
        } catch (const Error& e) {
          warn("group " + g.name + ": segment fit skipped: " + e.what());
        }
      } catch (const Error& e) {
        warn("group " + g.name + ": marginal gain skipped: " + e.what());
      }
      groups[g.name] = gj;
    }
    sj["groups"] = groups;
    if (cfg_.clustering) {
      Json cj = {{"method", "dbscan"}, {"eps", cfg_.cluster_eps}, {"min_pts", cfg_.min_pts}};
      if (emb_.n >= cfg_.min_pts) {
        DbscanOptions dopts{cfg_.cluster_eps, cfg_.min_pts, cfg_.cluster_backend, thread_count()};
        const auto labels = density_cluster(emb_, dopts);
        std::vector<int> hours(locals_.size());
        for (std::size_t i = 0; i < locals_.size(); ++i) hours[i] = static_cast<int>(locals_[i].local.hour);
        trace_ = cluster_growth(labels, hours);
        cj["n_clusters"] = trace_->sizes.size();
        cj["noise"] = trace_->noise_count;
        cj["sizes"] = trace_->sizes;
        cj["top3_share"] = trace_->top_k_share(3);
        Json growth = Json::array();
        for (const auto& gc : trace_->growth) growth.push_back(gc);
        cj["growth"] = growth;
        try {
          powerlaw_ = powerlaw_fit(trace_->sizes, cfg_.powerlaw_xmin);
          cj["powerlaw"] = detail::powerlaw_to_json(*powerlaw_);
        } catch (const Error& e) {
          warn(std::string("power-law fit skipped: ") + e.what());
        }
        try {
          pca_ = pca_project(emb_, 2);
          cj["pca_explained_ratio"] = pca_->explained_ratio;
        } catch (const Error& e) {
          warn(std::string("PCA projection skipped: ") + e.what());
        }
      } else {
        warn("clustering skipped: fewer records than min_pts");
      }
      sj["clustering"] = cj;
    }
    write_text("scaling.json", sj.dump(2) + "\n");
  }

  void stage_figures() {
    for (const auto& g : results_) {
      const std::string base = "figures/" + detail::safe_name(g.name) + "_";
      write_text(base + "profile_local.svg", profile_svg(g.name + " local semantic entropy", g.local.profile, g.local_fit));
      write_text(base + "profile_global.svg",
                 profile_svg(g.name + " global semantic entropy", g.global_profile, g.global_fit));
      write_text(base + "heatmap_local.svg", heatmap_svg(g.name + " local semantic entropy", g.local.grid, g.solar));
      write_text(base + "heatmap_global.svg", heatmap_svg(g.name + " global semantic entropy", g.global_grid, g.solar));
      if (auto it = g_curves_.find(g.name); it != g_curves_.end()) {
        std::vector<double> xs, ys;
        for (const auto& p : it->second.points) {
          xs.push_back(p.cum_posts);
          ys.push_back(p.marginal_gain);
        }
        std::vector<FitLine> fits;
        if (auto s = g_segments_.find(g.name); s != g_segments_.end()) {
          const auto& pts = it->second.points;
          const double split_x = s->second.split_fraction * pts.back().cum_posts;
          fits.push_back({s->second.early_slope, s->second.early.intercept, pts.front().cum_posts, split_x, "early"});
          fits.push_back({s->second.late_slope, s->second.late.intercept, split_x, pts.back().cum_posts, "late"});
        }
        write_text(base + "marginal_gain.svg",
                   loglog_svg(g.name + " marginal entropy gain", "cumulative posts", "marginal gain", xs, ys, fits));
      } else {
        warn("figure " + base + "marginal_gain.svg skipped: no marginal gain table");
      }
    }
    if (powerlaw_) {
      FitLine f{powerlaw_->exponent, powerlaw_->intercept, powerlaw_->bin_x.front(), powerlaw_->bin_x.back(), ""};
      write_text("figures/cluster_sizes.svg",
                 loglog_svg("cluster size distribution", "cluster size s", "P(s)", powerlaw_->bin_x, powerlaw_->bin_density, {f}));
    }
    if (trace_) {
      write_text("figures/cluster_growth.svg", growth_svg("cumulative cluster growth", *trace_));
      if (pca_) write_text("figures/clusters_pca.svg", scatter_svg("embedding projection by cluster", *pca_, trace_->labels));
    }
  }

  RunConfig cfg_;
  const TzDatabase& db_;
  RunManifest manifest_;
  std::filesystem::path stage_dir_;
  BinnedCorpus corpus_;
  EmbeddingMatrix emb_;
  std::vector<LocalTime> locals_;
  std::map<std::string, std::vector<std::size_t>> groups_;
  std::vector<GroupResult> results_;
  std::map<std::string, MarginalGainCurve> g_curves_;
  std::map<std::string, SegmentFit> g_segments_;
  std::optional<ClusterTrace> trace_;
  std::optional<PowerLawFit> powerlaw_;
  std::optional<PcaProjection> pca_;
};

inline RunManifest run_pipeline(const RunConfig& config, const TzDatabase& db) { return Pipeline(config, db).run(); }

}  // namespace chronoseme
