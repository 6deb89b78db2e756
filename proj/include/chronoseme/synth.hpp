#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "chronoseme/civil_time.hpp"
#include "chronoseme/common.hpp"
#include "chronoseme/embeddings.hpp"
#include "chronoseme/entropy.hpp"
#include "chronoseme/records.hpp"
#include "chronoseme/rng.hpp"

namespace chronoseme {

// Closed form for N(0, sigma^2 I_d): (d/2) ln(2 pi e sigma^2).
inline double analytic_gaussian_entropy(double sigma, std::size_t d) {
  if (!(sigma > 0.0) || d < 1) throw Error("analytic_gaussian_entropy: need sigma > 0 and d >= 1");
  return 0.5 * static_cast<double>(d) * (kLog2PiE + 2.0 * std::log(sigma));
}

inline constexpr const char* kSynthCountry = "XX";
inline constexpr const char* kSynthTz = "Etc/UTC";

// Generated corpus. Rows are rounded to float32 so the in-memory matrix is
// exactly what a CSEM round trip returns; rows are not unit norm.
struct SynthCorpus {
  std::vector<SubmissionRecord> records;
  EmbeddingMatrix embeddings;
  std::vector<int> labels;  // ground-truth topic per record (pref-attach only)
};

inline SubmissionRecord synth_record(std::string id, std::int64_t created_utc, std::string title) {
  SubmissionRecord r;
  r.id = std::move(id);
  r.created_utc = created_utc;
  r.country = kSynthCountry;
  r.tzid = kSynthTz;
  r.title_text = std::move(title);
  r.author_name = "synth_user";
  r.subreddit = "synthetic";
  r.lang_tag = "en";
  return r;
}

inline std::string padded(const char* prefix, std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, v);
  return buf;
}

struct RhythmGenSpec {
  std::size_t d = 8;
  std::size_t n_h = 200;        // samples per hour per month
  double base_sigma = 0.5;      // sigma_0
  double modulation = 0.3;      // a
  double acrophase_h = 4.0;     // phi*
  std::vector<int> months{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::int64_t year = 2024;
  std::uint64_t seed = 42;

  void validate(std::size_t k = 10) const {
    if (d < 1) throw Error("rhythm spec: d must be >= 1");
    if (!(base_sigma > 0.0)) throw Error("rhythm spec: base_sigma must be > 0");
    if (!(modulation >= 0.0 && modulation < 1.0)) throw Error("rhythm spec: modulation must be in [0, 1)");
    if (n_h <= k) throw Error("rhythm spec: n_h must exceed k");
    if (months.empty()) throw Error("rhythm spec: months list is empty");
    for (int m : months) {
      if (m < 1 || m > 12) throw Error("rhythm spec: month out of range");
    }
  }

  // sigma(t) = sigma_0 (1 + a cos(omega (t - phi*)))
  double sigma_at(double hour) const {
    return base_sigma * (1.0 + modulation * std::cos(2.0 * std::numbers::pi / 24.0 * (hour - acrophase_h)));
  }
};

inline RhythmGenSpec rhythm_spec_from_json(const Json& j) {
  RhythmGenSpec s;
  s.d = j.value("d", s.d);
  s.n_h = j.value("n_h", s.n_h);
  s.base_sigma = j.value("base_sigma", s.base_sigma);
  s.modulation = j.value("modulation", s.modulation);
  s.acrophase_h = j.value("acrophase_h", s.acrophase_h);
  s.months = j.value("months", s.months);
  s.year = j.value("year", s.year);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline Json rhythm_spec_to_json(const RhythmGenSpec& s) {
  return {{"d", s.d},         {"n_h", s.n_h},   {"base_sigma", s.base_sigma}, {"modulation", s.modulation},
          {"acrophase_h", s.acrophase_h}, {"months", s.months}, {"year", s.year}, {"seed", s.seed}};
}

// For each month, hour and sample: a draw from N(0, sigma(hour)^2 I_d) with
// a timestamp inside that UTC hour (day cycles 1..28, seconds spread
// within the hour).
inline SynthCorpus gen_gaussian_rhythm(const RhythmGenSpec& spec) {
  spec.validate();
  SynthCorpus c;
  CounterRng rng(spec.seed, 1);
  const std::size_t n = spec.months.size() * 24 * spec.n_h;
  c.records.reserve(n);
  c.embeddings.d = spec.d;
  c.embeddings.data.reserve(n * spec.d);
  for (int month : spec.months) {
    for (int hour = 0; hour < 24; ++hour) {
      const double sigma = spec.sigma_at(hour);
      for (std::size_t j = 0; j < spec.n_h; ++j) {
        CivilDateTime t;
        t.year = spec.year;
        t.month = static_cast<unsigned>(month);
        t.day = static_cast<unsigned>(1 + j % 28);
        t.hour = static_cast<unsigned>(hour);
        const auto within = static_cast<unsigned>((j * 37) % 3600);
        t.minute = within / 60;
        t.second = within % 60;
        const std::string id = "r" + padded("", static_cast<std::size_t>(month), 2) + padded("", static_cast<std::size_t>(hour), 2) +
                               padded("", j, 6);
        c.records.push_back(synth_record(id, epoch_from_civil(t), "synthetic rhythm post"));
        c.embeddings.ids.push_back(id);
        for (std::size_t k = 0; k < spec.d; ++k) {
          c.embeddings.data.push_back(static_cast<double>(static_cast<float>(sigma * rng.normal())));
        }
      }
    }
  }
  c.embeddings.n = c.records.size();
  return c;
}

struct PrefAttachSpec {
  std::size_t n_posts = 20000;
  double alpha = 0.98;          // probability of joining an existing topic
  std::size_t d = 16;
  double separation = 4.0;      // norm of each topic center
  double within_sigma = 0.05;
  std::int64_t start_utc = 1705276800;  // 2024-01-15T00:00:00Z
  std::uint64_t seed = 42;

  void validate() const {
    if (n_posts < 1) throw Error("prefattach spec: n_posts must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("prefattach spec: alpha must be in (0, 1)");
    if (d < 1) throw Error("prefattach spec: d must be >= 1");
    if (!(separation > 0.0) || !(within_sigma > 0.0)) throw Error("prefattach spec: separation and sigma must be > 0");
  }

  // Yule-Simon tail exponent of topic sizes: P(s) ~ s^-(1 + 1/alpha)
  double yule_simon_exponent() const { return -(1.0 + 1.0 / alpha); }
};

inline PrefAttachSpec prefattach_spec_from_json(const Json& j) {
  PrefAttachSpec s;
  s.n_posts = j.value("n_posts", s.n_posts);
  s.alpha = j.value("alpha", s.alpha);
  s.d = j.value("d", s.d);
  s.separation = j.value("separation", s.separation);
  s.within_sigma = j.value("within_sigma", s.within_sigma);
  s.start_utc = j.value("start_utc", s.start_utc);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline Json prefattach_spec_to_json(const PrefAttachSpec& s) {
  return {{"n_posts", s.n_posts},       {"alpha", s.alpha}, {"d", s.d}, {"separation", s.separation},
          {"within_sigma", s.within_sigma}, {"start_utc", s.start_utc}, {"seed", s.seed}};
}

// Post i joins the topic of a uniformly chosen earlier post with
// probability alpha (equivalent to choosing a topic in proportion to its
// size), else opens a topic with a random center of norm `separation`.
// Embedding = center + N(0, within_sigma^2 I_d). Post i is stamped at
// start + floor(i * 86400 / n_posts), spreading arrivals over one day.
inline SynthCorpus gen_pref_attach(const PrefAttachSpec& spec) {
  spec.validate();
  SynthCorpus c;
  CounterRng rng(spec.seed, 2);
  std::vector<std::vector<double>> centers;
  c.labels.resize(spec.n_posts);
  for (std::size_t i = 0; i < spec.n_posts; ++i) {
    if (i == 0 || rng.uniform() >= spec.alpha) {
      std::vector<double> center(spec.d);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (auto& v : center) {
          v = rng.normal();
          norm += v * v;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (auto& v : center) v *= spec.separation / norm;
      centers.push_back(std::move(center));
      c.labels[i] = static_cast<int>(centers.size() - 1);
    } else {
      c.labels[i] = c.labels[rng.below(i)];
    }
  }
  c.embeddings.d = spec.d;
  c.embeddings.n = spec.n_posts;
  c.embeddings.data.reserve(spec.n_posts * spec.d);
  for (std::size_t i = 0; i < spec.n_posts; ++i) {
    const std::string id = padded("p", i, 6);
    const auto offset = static_cast<std::int64_t>(i * 86400 / spec.n_posts);
    c.records.push_back(synth_record(id, spec.start_utc + offset, "synthetic topic post"));
    c.embeddings.ids.push_back(id);
    const auto& center = centers[static_cast<std::size_t>(c.labels[i])];
    for (std::size_t k = 0; k < spec.d; ++k) {
      c.embeddings.data.push_back(static_cast<double>(static_cast<float>(center[k] + spec.within_sigma * rng.normal())));
    }
  }
  return c;
}

inline std::vector<std::size_t> topic_sizes(std::span<const int> labels) {
  std::vector<std::size_t> sizes;
  for (int l : labels) {
    if (l < 0) continue;
    if (static_cast<std::size_t>(l) >= sizes.size()) sizes.resize(static_cast<std::size_t>(l) + 1, 0);
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

// Adjusted Rand index between two labelings; negative labels are treated
// as singleton clusters.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("adjusted_rand_index: label vectors differ in length");
  const std::size_t n = a.size();
  auto canon = [&](std::span<const int> l) {
    std::vector<long> out(n);
    long next_single = -1;
    for (std::size_t i = 0; i < n; ++i) out[i] = l[i] >= 0 ? l[i] : next_single--;
    return out;
  };
  const auto ca = canon(a), cb = canon(b);
  std::map<std::pair<long, long>, double> joint;
  std::map<long, double> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{ca[i], cb[i]}] += 1;
    ra[ca[i]] += 1;
    rb[cb[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : joint) sum_ij += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace chronoseme
