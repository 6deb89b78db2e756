#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "chronoseme/chronoseme.hpp"

namespace fs = std::filesystem;
using namespace chronoseme;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

FilterPolicy load_policy(const std::string& path) {
  return path.empty() ? FilterPolicy{} : filter_policy_from_json(read_json(path));
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

TzDatabase& tz_db() {
  static TzDatabase db;
  return db;
}

// ---- ingest ------------------------------------------------------------------

struct IngestArgs {
  std::string records, embeddings, policy, geotables, out = "binned.idx";
  bool allow_unnormalized = false;
};

int cmd_ingest(const IngestArgs& a) {
  IngestOptions opts;
  opts.policy = load_policy(a.policy);
  opts.embeddings.require_unit_norm = !a.allow_unnormalized;
  if (!a.geotables.empty()) {
    opts.geo = load_geo_tables(a.geotables);
    opts.geo->validate(tz_db());
  }
  const auto corpus = ingest(a.records, a.embeddings, opts, tz_db());
  print_warnings(corpus.warnings);
  write_binned(a.out, corpus);
  std::cout << corpus.report.to_json().dump() << '\n';
  return 0;
}

// ---- geotime -------------------------------------------------------------------

struct GeotimeArgs {
  std::string records, tables, out = "localized.jsonl";
};

int cmd_geotime(const GeotimeArgs& a) {
  const auto parsed = parse_records(fs::path(a.records));
  print_warnings(parsed.warnings);
  const auto tables = load_geo_tables(a.tables);
  tables.validate(tz_db());
  LocalizeReport report;
  const auto localized = localize_records(parsed.records, tables, tz_db(), &report);
  print_warnings(report.warnings);
  write_localized(a.out, localized);
  std::cout << report.to_json().dump() << '\n';
  return 0;
}

// ---- entropy --------------------------------------------------------------------

struct EntropyArgs {
  std::string binned, embeddings, out = "entropy.csv", outlier = "iqr_1p5", knn = "brute", group = "country";
  std::size_t k = 10;
  double epsilon = 1e-6;
  std::size_t n_min = 25;
  bool allow_unnormalized = false;
};

int cmd_entropy(const EntropyArgs& a) {
  const auto corpus = read_binned(a.binned);
  EmbeddingLoadOptions lo;
  lo.require_unit_norm = !a.allow_unnormalized;
  const auto emb = load_embeddings(a.embeddings, corpus.as_records(), lo);
  print_warnings(emb.warnings);
  std::map<std::string, std::vector<std::size_t>> groups;
  if (a.group == "none") {
    std::vector<std::size_t> all(corpus.records.size());
    std::iota(all.begin(), all.end(), 0);
    groups["all"] = all;
  } else {
    groups = corpus.groups();
  }
  EntropyStageOptions opts{a.k, a.epsilon, a.n_min, parse_outlier_policy(a.outlier), parse_knn_backend(a.knn)};
  const auto st = compute_entropy(corpus, emb, groups, opts);
  print_warnings(st.warnings);
  std::ostringstream s;
  write_entropy_csv(s, st.table);
  write_file(a.out, s.str());
  std::cout << st.counts.dump() << '\n';
  return 0;
}

// ---- rhythm -----------------------------------------------------------------------

struct RhythmArgs {
  std::string entropy, out = "cosinor.csv", group = "country", stat = "local_entropy";
  bool fdr = false;
};

int cmd_rhythm(const RhythmArgs& a) {
  const auto rows = read_entropy_csv(fs::path(a.entropy));
  if (std::none_of(rows.begin(), rows.end(), [&](const EntropyRow& r) { return r.stat == a.stat; })) {
    throw Error("entropy table has no rows with stat '" + a.stat + "'");
  }
  std::vector<CosinorRow> fits;
  for (const auto& g : groups_in(rows)) {
    const auto profile = grid_from_rows(rows, g, a.stat, true);
    if (!profile) continue;
    try {
      fits.push_back({g, fit_profile(*profile)});
    } catch (const Error& e) {
      std::cerr << "warning: group " << g << ": " << e.what() << '\n';
    }
  }
  if (a.fdr) apply_fdr(fits);
  std::ostringstream s;
  write_cosinor_csv(s, fits);
  write_file(a.out, s.str());
  std::cout << s.str();
  return 0;
}

// ---- scaling -----------------------------------------------------------------------

struct ScalingArgs {
  std::string entropy, counts, embeddings, binned, out = "scaling.json", ordering = "chronological", cumulation = "sum",
                                                 split_basis = "posts";
  double eps = 0.4, split = 0.15;
  std::size_t min_pts = 15, xmin = 2;
  bool raw_entropy = false, allow_unnormalized = false;
};

int cmd_scaling(const ScalingArgs& a) {
  const auto rows = read_entropy_csv(fs::path(a.entropy));
  const auto count_rows = a.counts.empty() ? rows : read_entropy_csv(fs::path(a.counts));
  Json out = Json::object();
  Json groups = Json::object();
  const auto ordering = parse_ordering(a.ordering);
  const auto cumulation = parse_cumulation(a.cumulation);
  if (cumulation == Cumulation::kLevel) {
    throw Error("scaling: accumulated cumulation needs per-post embeddings; use `chronoseme run`");
  }
  for (const auto& g : groups_in(rows)) {
    const auto entropy = grid_from_rows(rows, g, "global_entropy", false);
    const auto counts = grid_from_rows(count_rows, g, "count", false);
    if (!entropy || !counts) continue;
    Json gj = Json::object();
    try {
      gj["volume_entropy"] = detail::correlation_to_json(volume_entropy_correlation(*counts, *entropy));
    } catch (const Error& e) {
      std::cerr << "warning: group " << g << ": " << e.what() << '\n';
    }
    try {
      const auto curve = marginal_gain(*counts, *entropy, {ordering, cumulation, !a.raw_entropy});
      gj["marginal_gain"] = detail::curve_to_json(curve);
      gj["segment_fit"] = detail::segment_to_json(segment_fit(curve, a.split, parse_split_basis(a.split_basis)));
    } catch (const Error& e) {
      std::cerr << "warning: group " << g << ": " << e.what() << '\n';
    }
    groups[g] = gj;
  }
  out["groups"] = groups;
  if (!a.embeddings.empty()) {
    EmbeddingMatrix emb;
    std::vector<int> hours;
    if (!a.binned.empty()) {
      const auto corpus = read_binned(a.binned);
      EmbeddingLoadOptions lo;
      lo.require_unit_norm = !a.allow_unnormalized;
      emb = load_embeddings(a.embeddings, corpus.as_records(), lo);
      for (const auto& r : corpus.records) hours.push_back(static_cast<int>(r.local.local.hour));
    } else {
      emb = read_csem(fs::path(a.embeddings));
    }
    const auto labels = density_cluster(emb, DbscanOptions{a.eps, a.min_pts, KnnBackend::kVpTree, thread_count()});
    if (hours.empty()) hours.assign(labels.size(), 0);
    const auto trace = cluster_growth(labels, hours);
    Json cj = {{"method", "dbscan"}, {"eps", a.eps}, {"min_pts", a.min_pts}, {"n_clusters", trace.sizes.size()},
               {"noise", trace.noise_count}, {"sizes", trace.sizes}, {"top3_share", trace.top_k_share(3)}};
    if (!a.binned.empty()) {
      Json growth = Json::array();
      for (const auto& gc : trace.growth) growth.push_back(gc);
      cj["growth"] = growth;
    }
    try {
      cj["powerlaw"] = detail::powerlaw_to_json(powerlaw_fit(trace.sizes, a.xmin));
    } catch (const Error& e) {
      std::cerr << "warning: power-law fit: " << e.what() << '\n';
    }
    out["clustering"] = cj;
  }
  write_file(a.out, out.dump(2) + "\n");
  return 0;
}

// ---- synth -------------------------------------------------------------------------

struct SynthArgs {
  std::string kind, spec, out_records = "records.jsonl", out_emb = "embeddings.csem", out_labels;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  const Json spec = a.spec.empty() ? Json::object() : read_json(a.spec);
  SynthCorpus c;
  Json used;
  if (a.kind == "rhythm") {
    auto s = rhythm_spec_from_json(spec);
    if (a.seed) s.seed = *a.seed;
    c = gen_gaussian_rhythm(s);
    used = rhythm_spec_to_json(s);
  } else {
    auto s = prefattach_spec_from_json(spec);
    if (a.seed) s.seed = *a.seed;
    c = gen_pref_attach(s);
    used = prefattach_spec_to_json(s);
  }
  write_records(fs::path(a.out_records), c.records);
  write_csem(fs::path(a.out_emb), c.embeddings);
  if (!a.out_labels.empty()) {
    std::ostringstream s;
    s << "id,label\n";
    for (std::size_t i = 0; i < c.labels.size(); ++i) s << c.records[i].id << ',' << c.labels[i] << '\n';
    write_file(a.out_labels, s.str());
  }
  std::cout << Json{{"kind", a.kind}, {"spec", used}, {"records", c.records.size()}, {"d", c.embeddings.d}}.dump() << '\n';
  return 0;
}

// ---- run -----------------------------------------------------------------------------

int cmd_run(const Json& flags, const std::string& config_path) {
  Json merged = flags;
  fs::path base;
  if (!config_path.empty()) {
    Json file = read_json(config_path);
    if (file.contains("config") && file.contains("tool_version")) {
      file = file.at("config");
    } else {
      base = fs::path(config_path).parent_path();
    }
    for (auto& [k, v] : file.items()) {
      if (base.empty() || !v.is_string() ||
          (k != "records" && k != "embeddings" && k != "geotables" && k != "reference" && k != "out_dir" && k != "policy")) {
        merged[k] = v;
      } else {
        const fs::path p = v.get<std::string>();
        merged[k] = (p.empty() || p.is_absolute()) ? p.string() : (base / p).string();
      }
    }
  }
  const RunConfig cfg = run_config_from_json(merged);
  try {
    const auto manifest = run_pipeline(cfg, tz_db());
    print_warnings(manifest.warnings);
    std::cout << "run complete: " << cfg.out_dir.string() << " (" << manifest.outputs.size() << " outputs)\n";
    return 0;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

// ---- report --------------------------------------------------------------------------

struct ReportArgs {
  std::string run_dir, out;
};

int cmd_report(const ReportArgs& a) {
  const fs::path dir = a.run_dir;
  const fs::path out = a.out.empty() ? dir / "report" : fs::path(a.out);
  std::vector<std::string> warnings;
  auto table = [&](const char* file, const char* title) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) {
      warnings.push_back(std::string("missing ") + file + ", table skipped");
      return std::vector<CosinorRow>{};
    }
    const auto rows = read_cosinor_csv(p);
    std::printf("%s\n%-12s %10s %12s %8s %12s %12s\n", title, "group", "amplitude", "acrophase_h", "r2", "p_lr", "p_fdr");
    for (const auto& r : rows) {
      std::printf("%-12s %10.5f %12.2f %8.3f %12.3g %12.3g\n", r.group.c_str(), r.fit.amplitude, r.fit.acrophase_h,
                  r.fit.r2, r.fit.p_lr, r.fit.p_fdr);
    }
    std::printf("\n");
    return rows;
  };
  const auto local = table("cosinor.csv", "Local semantic entropy cosinor");
  table("cosinor_global.csv", "Global semantic entropy cosinor");
  const fs::path entropy_csv = dir / "entropy.csv";
  if (fs::exists(entropy_csv)) {
    const auto rows = read_entropy_csv(entropy_csv);
    for (const auto& g : groups_in(rows)) {
      std::optional<CosinorFit> fit;
      for (const auto& r : local) {
        if (r.group == g) {
          // the CSV carries amplitude/acrophase only; refit for the curve
          if (auto p = grid_from_rows(rows, g, "local_entropy", true)) fit = fit_profile(*p);
        }
      }
      if (auto p = grid_from_rows(rows, g, "local_entropy", true)) {
        write_file(out / (detail::safe_name(g) + "_profile_local.svg"), profile_svg(g + " local semantic entropy", *p, fit));
      }
      if (auto m = grid_from_rows(rows, g, "local_entropy", false)) {
        write_file(out / (detail::safe_name(g) + "_heatmap_local.svg"), heatmap_svg(g + " local semantic entropy", *m));
      }
    }
  } else {
    warnings.push_back("missing entropy.csv, figures skipped");
  }
  print_warnings(warnings);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chronoseme: circadian semantic entropy analysis"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "parse, filter, localize and bin records with their embeddings");
  ingest_cmd->add_option("--records", ia.records, "records JSONL")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--embeddings", ia.embeddings, "CSEM embeddings")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--policy", ia.policy, "filter policy JSON")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--geotables", ia.geotables, "geo tables JSON")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ia.out, "binned index output");
  ingest_cmd->add_flag("--allow-unnormalized", ia.allow_unnormalized, "skip the unit-norm check");

  GeotimeArgs ga;
  auto* geo_cmd = app.add_subcommand("geotime", "resolve locations and local times");
  geo_cmd->add_option("--records", ga.records)->required()->check(CLI::ExistingFile);
  geo_cmd->add_option("--tables", ga.tables)->required()->check(CLI::ExistingFile);
  geo_cmd->add_option("--out", ga.out);

  EntropyArgs ea;
  auto* ent_cmd = app.add_subcommand("entropy", "local and global semantic entropy tables");
  ent_cmd->add_option("--binned", ea.binned)->required()->check(CLI::ExistingFile);
  ent_cmd->add_option("--embeddings", ea.embeddings)->required()->check(CLI::ExistingFile);
  ent_cmd->add_option("--k", ea.k);
  ent_cmd->add_option("--epsilon", ea.epsilon);
  ent_cmd->add_option("--n-min", ea.n_min);
  ent_cmd->add_option("--outlier", ea.outlier)->check(CLI::IsMember({"iqr", "iqr_1p5", "none"}));
  ent_cmd->add_option("--knn", ea.knn)->check(CLI::IsMember({"brute", "vptree"}));
  ent_cmd->add_option("--group", ea.group)->check(CLI::IsMember({"country", "none"}));
  ent_cmd->add_option("--out", ea.out);
  ent_cmd->add_flag("--allow-unnormalized", ea.allow_unnormalized);

  RhythmArgs ra;
  auto* rhy_cmd = app.add_subcommand("rhythm", "cosinor fits of hourly profiles");
  rhy_cmd->add_option("--entropy", ra.entropy)->required()->check(CLI::ExistingFile);
  rhy_cmd->add_option("--group", ra.group)->check(CLI::IsMember({"country"}));
  rhy_cmd->add_option("--stat", ra.stat);
  rhy_cmd->add_flag("--fdr", ra.fdr, "Benjamini-Hochberg adjustment across groups");
  rhy_cmd->add_option("--out", ra.out);

  ScalingArgs sa;
  auto* sc_cmd = app.add_subcommand("scaling", "marginal gain, clustering and power-law fits");
  sc_cmd->add_option("--entropy", sa.entropy)->required()->check(CLI::ExistingFile);
  sc_cmd->add_option("--counts", sa.counts)->check(CLI::ExistingFile);
  sc_cmd->add_option("--embeddings", sa.embeddings)->check(CLI::ExistingFile);
  sc_cmd->add_option("--binned", sa.binned)->check(CLI::ExistingFile);
  sc_cmd->add_option("--eps", sa.eps);
  sc_cmd->add_option("--min-pts", sa.min_pts);
  sc_cmd->add_option("--xmin", sa.xmin);
  sc_cmd->add_option("--ordering", sa.ordering)->check(CLI::IsMember({"chronological", "by_count_asc"}));
  sc_cmd->add_option("--cumulation", sa.cumulation)->check(CLI::IsMember({"sum"}));
  sc_cmd->add_option("--split", sa.split);
  sc_cmd->add_option("--split-basis", sa.split_basis)->check(CLI::IsMember({"posts", "cells"}));
  sc_cmd->add_flag("--raw-entropy", sa.raw_entropy, "use H rather than |H|");
  sc_cmd->add_flag("--allow-unnormalized", sa.allow_unnormalized);
  sc_cmd->add_option("--out", sa.out);

  SynthArgs ya;
  auto* syn_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  syn_cmd->add_option("kind", ya.kind)->required()->check(CLI::IsMember({"rhythm", "prefattach"}));
  syn_cmd->add_option("--spec", ya.spec)->check(CLI::ExistingFile);
  syn_cmd->add_option("--seed", ya.seed);
  syn_cmd->add_option("--out-records", ya.out_records);
  syn_cmd->add_option("--out-emb", ya.out_emb);
  syn_cmd->add_option("--out-labels", ya.out_labels);

  std::string config_path, run_records, run_embeddings, run_geotables, run_out, run_reference;
  bool run_allow_unnormalized = false;
  auto* run_cmd = app.add_subcommand("run", "full pipeline into an output directory");
  run_cmd->add_option("--config", config_path, "run config or previous manifest; its values override flags")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--records", run_records);
  run_cmd->add_option("--embeddings", run_embeddings);
  run_cmd->add_option("--geotables", run_geotables);
  run_cmd->add_option("--reference", run_reference);
  run_cmd->add_option("--out", run_out);
  run_cmd->add_flag("--allow-unnormalized", run_allow_unnormalized);

  ReportArgs pa;
  auto* rep_cmd = app.add_subcommand("report", "tables and figures from a run directory");
  rep_cmd->add_option("--run", pa.run_dir)->required()->check(CLI::ExistingDirectory);
  rep_cmd->add_option("--out", pa.out);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest_cmd) return cmd_ingest(ia);
    if (*geo_cmd) return cmd_geotime(ga);
    if (*ent_cmd) return cmd_entropy(ea);
    if (*rhy_cmd) return cmd_rhythm(ra);
    if (*sc_cmd) return cmd_scaling(sa);
    if (*syn_cmd) return cmd_synth(ya);
    if (*run_cmd) {
      Json flags = Json::object();
      if (!run_records.empty()) flags["records"] = run_records;
      if (!run_embeddings.empty()) flags["embeddings"] = run_embeddings;
      if (!run_geotables.empty()) flags["geotables"] = run_geotables;
      if (!run_reference.empty()) flags["reference"] = run_reference;
      if (!run_out.empty()) flags["out_dir"] = run_out;
      if (run_allow_unnormalized) flags["require_unit_norm"] = false;
      return cmd_run(flags, config_path);
    }
    if (*rep_cmd) return cmd_report(pa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
