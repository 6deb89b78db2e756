#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "chronoseme/common.hpp"

namespace chronoseme {

// Left-to-right summation so the result never depends on threading.
inline double mean(std::span<const double> v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample variance (n - 1 denominator), two-pass.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return kNaN;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

inline double sem(std::span<const double> v) {
  return v.size() < 2 ? kNaN : sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

// Quantile with linear interpolation between order statistics, q at
// position (n - 1) * q of the sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return kNaN;
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> v, double q) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, q);
}

struct IqrFences {
  double q1 = kNaN;
  double q3 = kNaN;
  double lower = kNaN;
  double upper = kNaN;
};

inline IqrFences iqr_fences(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  IqrFences f;
  f.q1 = quantile_sorted(s, 0.25);
  f.q3 = quantile_sorted(s, 0.75);
  const double iqr = f.q3 - f.q1;
  f.lower = f.q1 - 1.5 * iqr;
  f.upper = f.q3 + 1.5 * iqr;
  return f;
}

// Drops values outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR] (fences inclusive),
// preserving input order. Fewer than 4 values pass through unchanged.
inline std::vector<double> iqr_filter(std::span<const double> v, bool* too_few = nullptr) {
  if (too_few) *too_few = v.size() < 4;
  if (v.size() < 4) return {v.begin(), v.end()};
  const IqrFences f = iqr_fences(v);
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) {
    if (x >= f.lower && x <= f.upper) out.push_back(x);
  }
  return out;
}

// Upper tail of chi-square with 2 degrees of freedom.
inline double chi2_sf_df2(double x) { return x <= 0.0 ? 1.0 : std::exp(-0.5 * x); }

// Two-sided p for Student t.
inline double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return kNaN;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

inline double student_t_quantile(double p, double df) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

struct CorrelationResult {
  double r = kNaN;
  double p = kNaN;
  std::size_t n = 0;
  double slope = kNaN;
  double intercept = kNaN;
  // 95% band of the mean response: yhat(x) +- t_crit * se * sqrt(1/n + (x - x_mean)^2 / sxx)
  double x_mean = kNaN;
  double sxx = kNaN;
  double residual_se = kNaN;
  double t_crit = kNaN;

  double predict(double x) const { return intercept + slope * x; }
  double band_halfwidth(double x) const {
    return t_crit * residual_se * std::sqrt(1.0 / static_cast<double>(n) + (x - x_mean) * (x - x_mean) / sxx);
  }
};

inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 3) throw DegenerateError("pearson: need at least 3 pairs, got " + std::to_string(x.size()));
  const auto n = x.size();
  const double mx = mean(x), my = mean(y);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson: constant input");
  CorrelationResult c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n) - 2.0;
  const double one_minus = 1.0 - c.r * c.r;
  c.p = one_minus <= 0.0 ? 0.0 : student_t_two_sided_p(c.r * std::sqrt(df / one_minus), df);
  c.slope = sxy / sxx;
  c.intercept = my - c.slope * mx;
  c.x_mean = mx;
  c.sxx = sxx;
  const double rss = std::max(0.0, syy - c.slope * sxy);
  c.residual_se = std::sqrt(rss / df);
  c.t_crit = student_t_quantile(0.975, df);
  return c;
}

struct TTestResult {
  double t = 0.0;
  double df = kNaN;
  double p = 1.0;
};

// Welch's unequal-variance t test, two-sided.
inline TTestResult t_test_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateError("t test: each group needs at least 2 values");
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  TTestResult res;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    if (ma == mb) return res;
    res.t = ma > mb ? INFINITY : -INFINITY;
    res.p = 0.0;
    return res;
  }
  res.t = (ma - mb) / std::sqrt(se2);
  res.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  res.p = student_t_two_sided_p(res.t, res.df);
  return res;
}

// Benjamini-Hochberg step-up adjustment, output in input order.
inline std::vector<double> bh_fdr(std::span<const double> p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("bh_fdr: p-value outside [0, 1]: " + format_double(v));
  }
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const double v = static_cast<double>(m) * p[order[k]] / static_cast<double>(k + 1);
    running = std::min(running, v);
    adj[order[k]] = running;
  }
  return adj;
}

}  // namespace chronoseme
