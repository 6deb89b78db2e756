#include <cmath>
#include <numbers>
#include <sstream>

#include "test_util.hpp"

using namespace chronoseme;
using namespace chronoseme::testing;

namespace {

constexpr double kW = 2.0 * std::numbers::pi / 24.0;

std::vector<double> hours24() {
  std::vector<double> t(24);
  for (int i = 0; i < 24; ++i) t[i] = i;
  return t;
}

std::vector<double> brute_bh(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> rank_value(m);
  for (std::size_t r = 0; r < m; ++r) rank_value[order[r]] = static_cast<double>(m) * p[order[r]] / double(r + 1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (p[j] >= p[i]) best = std::min(best, rank_value[j]);
    }
    out[i] = best;
  }
  return out;
}

}  // namespace

TEST(IqrFilter, UniformRampKept) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(iqr_filter(v), v);
}

TEST(IqrFilter, GoldenOutlier) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 1000};
  const auto f = iqr_fences(v);
  EXPECT_DOUBLE_EQ(f.q1, 3.25);
  EXPECT_DOUBLE_EQ(f.q3, 7.75);
  EXPECT_DOUBLE_EQ(f.lower, -3.5);
  EXPECT_DOUBLE_EQ(f.upper, 14.5);
  EXPECT_EQ(iqr_filter(v), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(IqrFilter, ConstantListKeptAndSmallListPassesThrough) {
  const std::vector<double> c(7, 4.2);
  EXPECT_EQ(iqr_filter(c), c);
  bool too_few = false;
  const std::vector<double> small{1, 2, 1000};
  EXPECT_EQ(iqr_filter(small, &too_few), small);
  EXPECT_TRUE(too_few);
}

TEST(CosinorFit, NoiselessModelRecovered) {
  const auto t = hours24();
  std::vector<double> y;
  for (double h : t) y.push_back(1.0 + 0.5 * std::cos(kW * (h - 3.0)));
  const auto f = cosinor_fit_with_test(t, y);
  EXPECT_NEAR(f.mesor, 1.0, 1e-9);
  EXPECT_NEAR(f.amplitude, 0.5, 1e-9);
  EXPECT_NEAR(f.acrophase_h, 3.0, 1e-9);
  EXPECT_NEAR(f.r2, 1.0, 1e-9);
  EXPECT_LT(f.p_lr, 1e-12);
  EXPECT_NEAR(f.amplitude, std::hypot(f.beta_cos, f.beta_sin), 1e-12);
  EXPECT_NEAR(f.predict(f.acrophase_h), f.mesor + f.amplitude, 1e-12);
}

TEST(CosinorFit, ConstantSeries) {
  const auto t = hours24();
  const std::vector<double> y(24, 5.0);
  const auto f = cosinor_fit_with_test(t, y);
  EXPECT_NEAR(f.mesor, 5.0, 1e-12);
  EXPECT_NEAR(f.amplitude, 0.0, 1e-12);
  EXPECT_EQ(f.r2, 0.0);
  EXPECT_EQ(f.p_lr, 1.0);
}

TEST(CosinorFit, PureSineHasSixHourAcrophase) {
  const auto t = hours24();
  std::vector<double> y;
  for (double h : t) y.push_back(0.5 * std::sin(kW * h));
  EXPECT_NEAR(cosinor_fit(t, y).acrophase_h, 6.0, 1e-9);
}

TEST(CosinorFit, RankDeficientDesignThrows) {
  const std::vector<double> t(10, 3.0), y(10, 1.0);
  EXPECT_THROW(cosinor_fit(t, y), Error);
  const std::vector<double> t3{0, 1, 2}, y3{1, 2, 3};
  EXPECT_THROW(cosinor_fit(t3, y3), Error);
}

TEST(CosinorFit, ShiftAndScaleEquivariance) {
  CounterRng rng(31, 0);
  const auto t = hours24();
  std::vector<double> y;
  for (double h : t) y.push_back(2.0 + 0.7 * std::cos(kW * (h - 9.0)) + 0.2 * rng.normal());
  const auto base = cosinor_fit_with_test(t, y);
  std::vector<double> shifted;
  for (double h : t) shifted.push_back(h + 5.0);
  const auto s = cosinor_fit_with_test(shifted, y);
  EXPECT_NEAR(wrap_hours(s.acrophase_h - base.acrophase_h), 5.0, 1e-9);
  EXPECT_NEAR(s.amplitude, base.amplitude, 1e-9);
  EXPECT_NEAR(s.r2, base.r2, 1e-9);
  EXPECT_NEAR(s.p_lr, base.p_lr, 1e-9);

  std::vector<double> neg;
  for (double v : y) neg.push_back(-3.0 * v + 1.0);
  const auto n = cosinor_fit_with_test(t, neg);
  EXPECT_NEAR(n.mesor, -3.0 * base.mesor + 1.0, 1e-9);
  EXPECT_NEAR(n.amplitude, 3.0 * base.amplitude, 1e-9);
  EXPECT_NEAR(n.r2, base.r2, 1e-9);
  EXPECT_NEAR(wrap_hours(n.acrophase_h - base.acrophase_h), 12.0, 1e-9);
}

TEST(LrTest, NullFitGivesOne) {
  CosinorFit f;
  f.n_points = 24;
  f.rss_full = 3.0;
  f.rss_null = 3.0;
  EXPECT_EQ(lr_test(f), 1.0);
  f.rss_full = 0.0;
  EXPECT_EQ(lr_test(f), 0.0);
}

TEST(LrTest, WhiteNoiseCalibration) {
  CounterRng rng(2718, 0);
  std::vector<double> t(240), y(240);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i % 24);
  int hits = 0;
  const int sims = 10000;
  for (int s = 0; s < sims; ++s) {
    for (auto& v : y) v = rng.normal();
    hits += cosinor_fit_with_test(t, y).p_lr < 0.05;
  }
  EXPECT_NEAR(hits / double(sims), 0.05, 0.01);
}

TEST(BhFdr, Examples) {
  EXPECT_EQ(bh_fdr(std::vector<double>{0.01, 0.02, 0.03, 0.04}), (std::vector<double>{0.04, 0.04, 0.04, 0.04}));
  EXPECT_EQ(bh_fdr(std::vector<double>{0.3}), (std::vector<double>{0.3}));
  EXPECT_EQ(bh_fdr(std::vector<double>{1, 1, 1}), (std::vector<double>{1, 1, 1}));
  EXPECT_THROW(bh_fdr(std::vector<double>{0.5, 1.2}), Error);
  EXPECT_THROW(bh_fdr(std::vector<double>{kNaN}), Error);
}

TEST(BhFdr, MatchesBruteForceAndIsMonotone) {
  CounterRng rng(99, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng.below(50);
    std::vector<double> p(m);
    for (auto& v : p) v = rng.uniform() < 0.2 ? std::round(rng.uniform() * 10) / 10 : rng.uniform() * rng.uniform();
    const auto adj = bh_fdr(p);
    EXPECT_EQ(adj, brute_bh(p));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t i = 1; i < m; ++i) EXPECT_LE(adj[order[i - 1]], adj[order[i]]);
  }
}

TEST(Pearson, PerfectAndOracle) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-2 * v + 7);
  EXPECT_DOUBLE_EQ(pearson(x, x).r, 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, neg).r, -1.0);
  const std::vector<double> a{2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.2, 6.1, 5.0, 4.2, 3.9, 2.8};
  const std::vector<double> b{1.0, 2.2, 1.1, 3.9, 3.1, 2.0, 1.8, 4.4, 3.0, 3.3, 2.5, 2.4};
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  const double n = 12.0;
  const double r = (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  EXPECT_NEAR(pearson(a, b).r, r, 1e-12);
  EXPECT_DOUBLE_EQ(pearson(a, b).r, pearson(b, a).r);
  std::vector<double> a2, b2;
  for (double v : a) a2.push_back(3 * v - 1);
  for (double v : b) b2.push_back(0.5 * v + 9);
  EXPECT_NEAR(pearson(a2, b2).r, pearson(a, b).r, 1e-12);
}

TEST(Pearson, Degenerate) {
  const std::vector<double> x{1, 2}, c{3, 3, 3}, y{1, 2, 3};
  EXPECT_THROW(pearson(x, x), DegenerateError);
  EXPECT_THROW(pearson(c, y), DegenerateError);
}

TEST(TTest, Examples) {
  const std::vector<double> a{1, 2, 3}, b{11, 12, 13}, z{0, 0};
  const auto same = t_test_two_sample(a, a);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_DOUBLE_EQ(same.p, 1.0);
  const auto shifted = t_test_two_sample(a, b);
  EXPECT_NEAR(shifted.t, -12.247448713915889, 1e-9);
  EXPECT_NEAR(shifted.df, 4.0, 1e-12);
  EXPECT_LT(shifted.p, 0.01);
  const auto zero = t_test_two_sample(z, z);
  EXPECT_EQ(zero.t, 0.0);
  EXPECT_EQ(zero.p, 1.0);
}

TEST(PeakTrough, PlantedPeaksAndTies) {
  auto g = HeatmapGrid::make("x", false);
  for (int m = 1; m <= 12; ++m) {
    const int planted = m % 12;
    for (int h = 0; h < 24; ++h) g.at(m, h).mean = std::cos(kW * (h - planted));
  }
  g.at(5, 0).mean.reset();
  const auto t = extract_peak_trough(g);
  ASSERT_EQ(t.rows.size(), 12u);
  for (const auto& row : t.rows) {
    EXPECT_EQ(row.peak_hour, row.month % 12);
    EXPECT_TRUE(t.trough_window.contains(row.trough_hour));
  }
  auto flat = HeatmapGrid::make("x", false);
  for (auto& c : flat.cells) c.mean = 1.0;
  const auto ft = extract_peak_trough(flat);
  EXPECT_EQ(ft.rows[0].peak_hour, 0);
  EXPECT_EQ(ft.rows[0].trough_hour, 12);
}

TEST(SeasonalCorrelation, IdenticalSeriesGiveOne) {
  PeakTroughTable t;
  std::vector<MonthlySolar> solar;
  for (int m = 1; m <= 12; ++m) {
    const int rise = 4 + (m > 6 ? 12 - m : m) / 2;
    t.rows.push_back({m, rise, 18 - rise / 2, 1.0, 0.0});
    MonthlySolar s;
    s.month = static_cast<unsigned>(m);
    s.sunrise_mean = rise;
    s.sunset_mean = 18 - rise / 2;
    solar.push_back(s);
  }
  const auto c = seasonal_correlation(t, solar);
  EXPECT_NEAR(c.sunrise_vs_peak.r, 1.0, 1e-12);
  EXPECT_NEAR(c.sunset_vs_trough.r, 1.0, 1e-12);
}

TEST(SeasonalCorrelation, PlantedLinearRelation) {
  CounterRng rng(8, 0);
  PeakTroughTable t;
  std::vector<MonthlySolar> solar;
  std::vector<double> x, y;
  for (int m = 1; m <= 12; ++m) {
    const double rise = 6.0 + 2.0 * std::cos(2 * std::numbers::pi * (m - 1) / 12.0);
    const int peak = static_cast<int>(std::lround(rise + 0.3 * rng.normal()));
    t.rows.push_back({m, peak, 14, 1.0, 0.0});
    MonthlySolar s;
    s.month = static_cast<unsigned>(m);
    s.sunrise_mean = rise;
    s.sunset_mean = 18.0 + m * 0.1;
    solar.push_back(s);
    x.push_back(rise);
    y.push_back(peak);
  }
  t.rows[3].trough_hour = 15;
  const auto c = seasonal_correlation(t, solar);
  EXPECT_NEAR(c.sunrise_vs_peak.r, pearson(x, y).r, 1e-12);
  EXPECT_GT(c.sunrise_vs_peak.r, 0.85);
}

TEST(GridCorrelation, SignFlip) {
  CounterRng rng(1, 0);
  auto a = HeatmapGrid::make("a", false);
  for (auto& c : a.cells) c.mean = rng.normal();
  auto b = a;
  for (auto& c : b.cells) c.mean = -*c.mean;
  EXPECT_NEAR(grid_correlation(a, a).r, 1.0, 1e-12);
  EXPECT_NEAR(grid_correlation(a, b).r, -1.0, 1e-12);
}

TEST(CompareExternal, SelfAndHalfHourInterpolation) {
  std::vector<double> profile(24);
  std::vector<ReferencePoint> self, half;
  for (int h = 0; h < 24; ++h) {
    profile[h] = std::sin(0.3 * h) + 0.05 * h;
    self.push_back({double(h), profile[h]});
  }
  EXPECT_NEAR(compare_external(profile, self).r, 1.0, 1e-12);
  std::vector<double> ramp(24);
  for (int h = 0; h < 24; ++h) ramp[h] = 0.25 * h - 1.0;
  for (int h = 0; h < 24; ++h) half.push_back({h - 0.5, 0.25 * (h - 0.5) - 1.0});
  half.push_back({23.5, 0.25 * 23.5 - 1.0});
  EXPECT_NEAR(compare_external(ramp, half).r, 1.0, 1e-12);
  std::istringstream csv("hour,value\n0,1\n12,3\n23,2\n");
  const auto pts = read_reference_csv(csv);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_NEAR(resample_reference(pts)[6], 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(resample_reference({{3.0, 1.0}, {5.0, 2.0}})[0]));
}
