// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "chronoseme/chronoseme.hpp"

using namespace chronoseme;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const TzDatabase& tz_db() {
  static const TzDatabase db;
  return db;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chronoseme_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void set_threads(const char* v) { ::setenv("CHRONOSEME_THREADS", v, 1); }

EmbeddingMatrix gaussian(std::size_t n, std::size_t d, double sigma, std::uint64_t seed,
                         const std::vector<double>& center = {}) {
  CounterRng rng(seed, 0);
  EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) m.data.push_back((center.empty() ? 0.0 : center[k]) + sigma * rng.normal());
    m.ids.push_back("a" + std::to_string(i));
  }
  return m;
}

EmbeddingMatrix concat(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  EmbeddingMatrix m = a;
  m.data.insert(m.data.end(), b.data.begin(), b.data.end());
  for (std::size_t i = 0; i < b.n; ++i) m.ids.push_back("c" + std::to_string(i));
  m.n += b.n;
  return m;
}

EmbeddingMatrix scaled(const EmbeddingMatrix& a, double c) {
  EmbeddingMatrix m = a;
  for (auto& v : m.data) v *= c;
  return m;
}

void write_corpus(const SynthCorpus& c, const fs::path& dir) {
  write_records(dir / "records.jsonl", c.records);
  write_csem(dir / "emb.csem", c.embeddings);
}

RunConfig corpus_config(const fs::path& dir, const fs::path& out) {
  RunConfig cfg;
  cfg.records = dir / "records.jsonl";
  cfg.embeddings = dir / "emb.csem";
  cfg.out_dir = out;
  cfg.require_unit_norm = false;
  return cfg;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return files;
}

// AC1
Outcome gaussian_entropy_oracle() {
  const auto m = gaussian(5000, 4, 1.0, 101);
  const auto t0 = Clock::now();
  const auto g = global_entropy(m);
  const double secs = seconds_since(t0);
  const double target = analytic_gaussian_entropy(1.0, 4);
  const bool ok = std::fabs(g.h - target) <= 0.05 && secs < 1.0;
  return {ok, fmt("H=%.4f target=%.4f |diff|=%.4f tol=0.05 runtime=%.3fs", g.h, target, std::fabs(g.h - target), secs)};
}

// AC2
Outcome dilation_law() {
  const std::size_t d = 6;
  const auto m = gaussian(600, d, 1.0, 102);
  const auto m2 = scaled(m, 2.0);
  const auto a = local_entropy(m), b = local_entropy(m2);
  double worst_local = 0.0;
  for (std::size_t i = 0; i < a.h.size(); ++i) worst_local = std::max(worst_local, std::fabs(b.h[i] - a.h[i] - std::log(2.0)));
  const GlobalEntropyOptions no_eps{0.0, 25};
  const double shift = global_entropy(m2, no_eps).h - global_entropy(m, no_eps).h;
  const double global_err = std::fabs(shift - static_cast<double>(d) * std::log(2.0));
  const bool ok = worst_local <= 1e-6 && global_err <= 1e-4;
  return {ok, fmt("max|dH_local-ln2|=%.2e (tol 1e-6) |dH_global-d ln2|=%.2e (tol 1e-4)", worst_local, global_err)};
}

// AC3
Outcome cosinor_exactness() {
  std::vector<double> t, y;
  for (int h = 0; h < 24; ++h) {
    t.push_back(h);
    y.push_back(1.0 + 0.5 * std::cos(kOmega * (h - 3.0)));
  }
  const auto f = cosinor_fit_with_test(t, y);
  const double err = std::max({std::fabs(f.mesor - 1.0), std::fabs(f.amplitude - 0.5), std::fabs(f.acrophase_h - 3.0)});
  const bool ok = err <= 1e-9 && f.r2 >= 1.0 - 1e-12 && f.p_lr < 1e-12;
  return {ok, fmt("max param err=%.2e r2=%.15f p=%.3g", err, f.r2, f.p_lr)};
}

// AC4
Outcome rhythm_recovery() {
  RhythmGenSpec spec;
  spec.modulation = 0.3;
  spec.acrophase_h = 4.0;
  spec.n_h = 200;
  spec.d = 8;
  spec.seed = 42;
  const auto dir = scratch("rhythm");
  write_corpus(gen_gaussian_rhythm(spec), dir);
  set_threads("1");
  const auto t0 = Clock::now();
  run_pipeline(corpus_config(dir, dir / "out"), tz_db());
  const double secs = seconds_since(t0);
  const auto rows = read_cosinor_csv(dir / "out" / "cosinor.csv");
  if (rows.size() != 1) return {false, fmt("expected one local cosinor row, got %zu", rows.size())};
  const auto& f = rows[0].fit;
  const double phase_err = std::fabs(f.acrophase_h - 4.0);
  const bool ok = phase_err <= 0.5 && f.p_fdr < 0.001 && f.r2 >= 0.7 && secs < 60.0;
  fs::remove_all(dir);
  return {ok, fmt("acrophase=%.3f h p_fdr=%.3g r2=%.3f runtime=%.1fs (threads=1)", f.acrophase_h, f.p_fdr, f.r2, secs)};
}

// AC5
Outcome null_calibration() {
  auto run = [](std::size_t n, std::size_t sims, double* fpr) {
    CounterRng rng(555, n);
    std::vector<double> t(n), y(n), p;
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i % 24);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < sims; ++s) {
      for (auto& v : y) v = rng.normal();
      const double pv = cosinor_fit_with_test(t, y).p_lr;
      p.push_back(pv);
      if (pv < 0.05) ++hits;
    }
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    const double m = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      ks = std::max({ks, std::fabs(static_cast<double>(i + 1) / m - p[i]), std::fabs(p[i] - static_cast<double>(i) / m)});
    }
    *fpr = static_cast<double>(hits) / m;
    return ks;
  };
  double fpr = 0.0, fpr24 = 0.0;
  const double ks = run(240, 10000, &fpr);
  const double ks24 = run(24, 10000, &fpr24);
  const bool ok = ks < 0.02 && std::fabs(fpr - 0.05) <= 0.01;
  return {ok, fmt("n=240: KS=%.4f (tol 0.02) FPR=%.4f (0.05+-0.01); info n=24: KS=%.4f FPR=%.4f", ks, fpr, ks24, fpr24)};
}

// AC6
Outcome bh_oracle() {
  CounterRng rng(606, 0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(50);
    std::vector<double> p(m);
    for (auto& v : p) {
      v = rng.uniform();
      if (rng.below(4) == 0) v = std::round(v * 10.0) / 10.0;  // ties
      if (rng.below(10) == 0) v *= 1e-3;
    }
    const auto adj = bh_fdr(p);
    for (std::size_t i = 0; i < m; ++i) {
      double best = 1.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (p[j] < p[i]) continue;
        std::size_t rank = 0;
        for (double q : p) rank += q <= p[j];
        best = std::min(best, static_cast<double>(m) * p[j] / static_cast<double>(rank));
      }
      if (adj[i] != best) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("1000 vectors, lengths 1-50, mismatching entries=%zu", mismatches)};
}

// AC7
Outcome topic_mixing() {
  const std::size_t d = 8;
  const double sigma = 0.3;
  std::vector<double> own(d, 0.0);
  own[4] = 2.0;  // a fifth topic, distinct from the four below
  const auto one = gaussian(400, d, sigma, 701, own);
  EmbeddingMatrix four;
  four.d = d;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> center(d, 0.0);
    center[c] = 2.0;
    four = c == 0 ? gaussian(100, d, sigma, 710, center) : concat(four, gaussian(100, d, sigma, 710 + c, center));
  }
  const auto same = local_entropy(one).h;
  const auto diff = local_entropy(four).h;
  const auto t = t_test_two_sample(diff, same);
  const double h_one = global_entropy(one).h, h_four = global_entropy(four).h;
  const double h_all = global_entropy(concat(one, four)).h;
  const bool ok = mean(diff) > mean(same) && t.p < 0.01 && h_all > h_one && h_all > h_four;
  return {ok, fmt("mean H_local diff=%.3f same=%.3f Welch p=%.2g; H_global one=%.3f four=%.3f combined=%.3f", mean(diff),
                  mean(same), t.p, h_one, h_four, h_all)};
}

// AC8
Outcome scaling_suite() {
  PrefAttachSpec spec;
  spec.alpha = 0.98;
  spec.n_posts = 20000;
  spec.seed = 42;
  const auto dir = scratch("prefattach");
  write_corpus(gen_pref_attach(spec), dir);
  auto cfg = corpus_config(dir, dir / "out");
  cfg.cumulation = Cumulation::kLevel;
  cfg.ordering = CellOrdering::kChronological;
  cfg.cluster_eps = 0.4;
  cfg.min_pts = 2;
  run_pipeline(cfg, tz_db());
  std::ifstream in(dir / "out" / "scaling.json");
  const Json j = Json::parse(in);
  fs::remove_all(dir);
  const auto& cl = j.at("clustering");
  if (!cl.contains("powerlaw")) return {false, "power-law fit missing from scaling.json"};
  const double exponent = cl["powerlaw"]["exponent"].get<double>();
  const double target = spec.yule_simon_exponent();
  const double top3 = cl["top3_share"].get<double>();
  const auto& seg = j.at("groups").at(std::string(kSynthCountry)).at("segment_fit");
  const double reduction = seg["reduction"].is_number() ? seg["reduction"].get<double>() : kNaN;
  const bool ok = std::fabs(exponent - target) <= 0.2 && reduction > 0.5 && top3 >= 0.5;
  return {ok, fmt("exponent=%.3f target=%.4f (tol 0.2) reduction=%.3f (>0.5) top3=%.3f (>=0.5)", exponent, target,
                  reduction, top3)};
}

// AC9
Outcome solar_accuracy() {
  struct Ref {
    const char* city;
    double lat, lon;
    const char* tz;
    unsigned month;
    double rise, set;
  };
  // NOAA calculator values for the 15th, decimal local clock hours.
  const std::vector<Ref> refs{
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
  double worst = 0.0;
  std::string where;
  for (const auto& r : refs) {
    const auto s = solar_times(r.lat, r.lon, r.tz, tz_db(), 2024, r.month);
    const double err = 60.0 * std::max(std::fabs(s.sunrise_local - r.rise), std::fabs(s.sunset_local - r.set));
    if (!(err <= worst)) {
      worst = err;
      where = std::string(r.city) + " month " + std::to_string(r.month);
    }
  }
  return {worst <= 3.0, fmt("12 city-months, worst error=%.2f min at %s (tol 3 min)", worst, where.c_str())};
}

// AC10
Outcome determinism() {
  RhythmGenSpec spec;
  spec.n_h = 40;
  spec.d = 8;
  spec.months = {1, 4, 7, 10};
  spec.seed = 1010;
  const auto dir = scratch("determinism");
  write_corpus(gen_gaussian_rhythm(spec), dir);
  auto cfg = corpus_config(dir, dir / "t1");
  cfg.knn_backend = KnnBackend::kVpTree;
  cfg.min_pts = 5;
  set_threads("1");
  run_pipeline(cfg, tz_db());
  cfg.out_dir = dir / "t8";
  set_threads("8");
  run_pipeline(cfg, tz_db());
  set_threads("1");
  const auto a = snapshot(dir / "t1"), b = snapshot(dir / "t8");
  fs::remove_all(dir);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  const bool ok = a.size() == b.size() && differing == 0 && !a.empty();
  return {ok, fmt("files threads=1: %zu threads=8: %zu differing: %zu", a.size(), b.size(), differing)};
}

// AC11
Outcome iqr_golden() {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 1000};
  const auto kept = iqr_filter(v);
  const std::vector<double> expect{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto f = iqr_fences(v);
  return {kept == expect, fmt("kept %zu values, fences [%.4g, %.4g]", kept.size(), f.lower, f.upper)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1 gaussian entropy oracle", gaussian_entropy_oracle},
      {"AC2 dilation law", dilation_law},
      {"AC3 cosinor exactness", cosinor_exactness},
      {"AC4 rhythm recovery end to end", rhythm_recovery},
      {"AC5 null calibration", null_calibration},
      {"AC6 bh_fdr brute-force oracle", bh_oracle},
      {"AC7 one vs four topic sets", topic_mixing},
      {"AC8 scaling suite", scaling_suite},
      {"AC9 solar accuracy", solar_accuracy},
      {"AC10 thread determinism", determinism},
      {"AC11 iqr golden case", iqr_golden},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
