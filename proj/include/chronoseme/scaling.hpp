#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chronoseme/binning.hpp"
#include "chronoseme/embeddings.hpp"
#include "chronoseme/entropy.hpp"
#include "chronoseme/heatmap.hpp"
#include "chronoseme/knn.hpp"
#include "chronoseme/rhythm.hpp"
#include "chronoseme/stats.hpp"

namespace chronoseme {

enum class CellOrdering { kChronological, kByCountAsc };

inline CellOrdering parse_ordering(std::string_view s) {
  if (s == "chronological") return CellOrdering::kChronological;
  if (s == "by_count_asc") return CellOrdering::kByCountAsc;
  throw Error("unknown ordering '" + std::string(s) + "'");
}
inline std::string_view ordering_name(CellOrdering o) {
  return o == CellOrdering::kChronological ? "chronological" : "by_count_asc";
}

// How the entropy axis accumulates: kSum adds per-cell |H| (or H), kLevel
// takes the grid value itself as the running total (used with
// accumulated_entropy_grid, where each cell already holds the entropy of
// everything posted up to it).
enum class Cumulation { kSum, kLevel };

inline Cumulation parse_cumulation(std::string_view s) {
  if (s == "sum") return Cumulation::kSum;
  if (s == "accumulated" || s == "level") return Cumulation::kLevel;
  throw Error("unknown cumulation '" + std::string(s) + "'");
}
inline std::string_view cumulation_name(Cumulation c) { return c == Cumulation::kSum ? "sum" : "accumulated"; }

struct MarginalGainPoint {
  int month = 0;
  int hour = 0;
  double cum_posts = 0.0;
  double cum_entropy = 0.0;
  double marginal_gain = kNaN;
};

struct MarginalGainCurve {
  std::vector<MarginalGainPoint> points;
  CellOrdering ordering = CellOrdering::kChronological;
  Cumulation cumulation = Cumulation::kSum;
  bool magnitude = true;
};

struct MarginalGainOptions {
  CellOrdering ordering = CellOrdering::kChronological;
  Cumulation cumulation = Cumulation::kSum;
  bool magnitude = true;  // |H| rather than H
};

// Derivative of f over strictly increasing x: second-order central
// differences on unequal spacing inside, one-sided at the ends.
inline std::vector<double> gradient(std::span<const double> f, std::span<const double> x) {
  const std::size_t n = f.size();
  std::vector<double> g(n, kNaN);
  if (n < 2) return g;
  g[0] = (f[1] - f[0]) / (x[1] - x[0]);
  g[n - 1] = (f[n - 1] - f[n - 2]) / (x[n - 1] - x[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h1 = x[i] - x[i - 1];
    const double h2 = x[i + 1] - x[i];
    g[i] = (-h2 / (h1 * (h1 + h2))) * f[i - 1] + ((h2 - h1) / (h1 * h2)) * f[i] + (h1 / (h2 * (h1 + h2))) * f[i + 1];
  }
  return g;
}

// Cells taken in the stated order; ties in by_count_asc keep chronological
// order.
inline std::vector<BinKey> order_cells(const HeatmapGrid& counts, CellOrdering ordering) {
  std::vector<BinKey> keys;
  for (std::size_t row = 0; row < counts.rows(); ++row) {
    for (int h = 0; h < 24; ++h) keys.push_back({counts.month_of_row(row), h});
  }
  if (ordering == CellOrdering::kByCountAsc) {
    std::stable_sort(keys.begin(), keys.end(), [&](const BinKey& a, const BinKey& b) {
      return counts.at(a.month, a.hour).n < counts.at(b.month, b.hour).n;
    });
  }
  return keys;
}

// count_grid cells carry post counts in `n`.
inline MarginalGainCurve marginal_gain(const HeatmapGrid& count_grid, const HeatmapGrid& entropy_grid,
                                       const MarginalGainOptions& opts = {}) {
  if (count_grid.pooled != entropy_grid.pooled) throw Error("marginal_gain: grid shapes differ");
  MarginalGainCurve curve;
  curve.ordering = opts.ordering;
  curve.cumulation = opts.cumulation;
  curve.magnitude = opts.magnitude;
  double posts = 0.0, ent = 0.0;
  for (const auto& key : order_cells(count_grid, opts.ordering)) {
    const auto& c = count_grid.at(key.month, key.hour);
    const auto& e = entropy_grid.at(key.month, key.hour);
    if (c.n == 0 || !e.mean) continue;
    const double v = opts.magnitude ? std::fabs(*e.mean) : *e.mean;
    posts += static_cast<double>(c.n);
    ent = opts.cumulation == Cumulation::kSum ? ent + v : v;
    curve.points.push_back({key.month, key.hour, posts, ent, kNaN});
  }
  if (curve.points.size() < 5) {
    throw DegenerateError("marginal_gain: need at least 5 non-empty paired cells, got " +
                          std::to_string(curve.points.size()));
  }
  std::vector<double> x, f;
  for (const auto& p : curve.points) {
    x.push_back(p.cum_posts);
    f.push_back(p.cum_entropy);
  }
  const auto g = gradient(f, x);
  for (std::size_t i = 0; i < g.size(); ++i) curve.points[i].marginal_gain = g[i];
  return curve;
}

struct LogLogLine {
  double slope = kNaN;
  double intercept = kNaN;
  double r2 = kNaN;
  std::size_t n_points = 0;
};

inline LogLogLine ols_line(std::span<const double> x, std::span<const double> y) {
  LogLogLine l;
  l.n_points = x.size();
  const double mx = mean(x), my = mean(y);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateError("log-log fit: all x values equal");
  l.slope = sxy / sxx;
  l.intercept = my - l.slope * mx;
  l.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return l;
}

enum class SplitBasis { kPosts, kCells };

inline SplitBasis parse_split_basis(std::string_view s) {
  if (s == "posts") return SplitBasis::kPosts;
  if (s == "cells") return SplitBasis::kCells;
  throw Error("unknown split basis '" + std::string(s) + "'");
}
inline std::string_view split_basis_name(SplitBasis b) { return b == SplitBasis::kPosts ? "posts" : "cells"; }

struct SegmentFit {
  double split_fraction = 0.15;
  SplitBasis basis = SplitBasis::kPosts;
  LogLogLine early;
  LogLogLine late;
  double early_slope = kNaN;
  double late_slope = kNaN;
  double early_mean_gain = kNaN;
  double late_mean_gain = kNaN;
  double reduction = kNaN;  // 1 - late_mean_gain / early_mean_gain
  std::size_t early_points = 0;
  std::size_t late_points = 0;
  std::size_t early_excluded = 0;  // non-positive gains left out of the log fit
  std::size_t late_excluded = 0;
};

// Early segment: points whose cumulative posts are within the first
// `split` of total volume (kPosts) or the first ceil(split * n) points
// (kCells).
inline SegmentFit segment_fit(const MarginalGainCurve& curve, double split = 0.15, SplitBasis basis = SplitBasis::kPosts) {
  if (!(split > 0.0 && split < 1.0)) throw Error("segment_fit: split must be in (0, 1)");
  const auto& pts = curve.points;
  if (pts.empty()) throw DegenerateError("segment_fit: empty curve");
  SegmentFit fit;
  fit.split_fraction = split;
  fit.basis = basis;
  const double total = pts.back().cum_posts;
  const auto early_count = static_cast<std::size_t>(std::ceil(split * static_cast<double>(pts.size())));
  auto in_early = [&](std::size_t i) {
    return basis == SplitBasis::kPosts ? pts[i].cum_posts <= split * total : i < early_count;
  };
  std::vector<double> ex, ey, lx, ly, eg, lg;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool early = in_early(i);
    const double g = pts[i].marginal_gain;
    (early ? eg : lg).push_back(g);
    if (g > 0.0) {
      (early ? ex : lx).push_back(std::log(pts[i].cum_posts));
      (early ? ey : ly).push_back(std::log(g));
    } else {
      ++(early ? fit.early_excluded : fit.late_excluded);
    }
  }
  fit.early_points = ex.size();
  fit.late_points = lx.size();
  if (ex.size() < 3) {
    throw DegenerateError("segment_fit: early segment has " + std::to_string(ex.size()) +
                          " usable points (need 3)");
  }
  if (lx.size() < 3) {
    throw DegenerateError("segment_fit: late segment has " + std::to_string(lx.size()) + " usable points (need 3)");
  }
  fit.early = ols_line(ex, ey);
  fit.late = ols_line(lx, ly);
  fit.early_slope = fit.early.slope;
  fit.late_slope = fit.late.slope;
  fit.early_mean_gain = mean(eg);
  fit.late_mean_gain = mean(lg);
  fit.reduction = 1.0 - fit.late_mean_gain / fit.early_mean_gain;
  return fit;
}

// Entropy of the accumulated corpus: each cell holds H_global of every post
// in that cell and all cells before it in the given order. Cells with no
// posts stay empty; cells before n_min posts have accumulated stay empty.
inline HeatmapGrid accumulated_entropy_grid(const EmbeddingMatrix& emb, const BinIndex& bins, const HeatmapGrid& counts,
                                            CellOrdering ordering, const GlobalEntropyOptions& opts = {}) {
  HeatmapGrid out = HeatmapGrid::make("global_entropy_accumulated", bins.resolution == BinResolution::kHour);
  const auto d = static_cast<Eigen::Index>(emb.d);
  Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd sx = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd shift;  // first row seen; accumulating shifted sums keeps the covariance well conditioned
  std::size_t n = 0;
  for (const auto& key : order_cells(counts, ordering)) {
    auto it = bins.cells.find(key);
    if (it == bins.cells.end() || it->second.empty()) continue;
    for (auto r : it->second) {
      const auto row = emb.row(r);
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(row.data(), d);
      if (n == 0) shift = v;
      v -= shift;
      sx += v;
      sxx.noalias() += v * v.transpose();
      ++n;
    }
    if (n < std::max<std::size_t>(opts.n_min, 2)) continue;
    const Eigen::VectorXd mu = sx / static_cast<double>(n);
    const Eigen::MatrixXd cov = (sxx - static_cast<double>(n) * mu * mu.transpose()) / static_cast<double>(n - 1);
    auto& cell = out.at(key.month, key.hour);
    cell.mean = gaussian_entropy_from_eigenvalues(covariance_eigenvalues(cov), opts.epsilon, nullptr);
    cell.n = n;
  }
  return out;
}

// ---- density clustering -------------------------------------------------

inline constexpr int kNoise = -1;

struct DbscanOptions {
  double eps = 0.4;
  std::size_t min_pts = 15;  // neighbor count includes the point itself
  KnnBackend backend = KnnBackend::kBruteForce;
  std::size_t threads = thread_count();
};

namespace detail {

inline std::vector<std::size_t> radius_neighbors_brute(const PointView& pts, std::size_t i, double eps) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (euclidean(pts[i], pts[j]) <= eps) out.push_back(j);
  }
  return out;
}

}  // namespace detail

// DBSCAN: core points have >= min_pts points within eps (self included);
// clusters are connected components of core points; a border point joins
// the lowest-numbered cluster among its core neighbors. Labels are then
// renumbered by first occurrence in row order, so output is a pure
// function of the input rows.
inline std::vector<int> density_cluster(const EmbeddingMatrix& emb, std::span<const std::size_t> rows,
                                        const DbscanOptions& opts = {}) {
  const PointView pts(emb, rows);
  const std::size_t n = pts.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;
  std::unique_ptr<VpTree> tree;
  if (opts.backend == KnnBackend::kVpTree) tree = std::make_unique<VpTree>(pts);
  // neighbor order does not affect the labels, so tree results stay unsorted
  auto neighbors = [&](std::size_t i) {
    return tree ? tree->radius_query(i, opts.eps, false) : detail::radius_neighbors_brute(pts, i, opts.eps);
  };
  std::vector<char> core(n, 0);
  parallel_for(
      n,
      [&](std::size_t i) {
        const std::size_t count =
            tree ? tree->radius_count(i, opts.eps, opts.min_pts) : detail::radius_neighbors_brute(pts, i, opts.eps).size();
        core[i] = count >= opts.min_pts ? 1 : 0;
      },
      opts.threads);

  int next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != kNoise) continue;
    const int c = next++;
    labels[i] = c;
    queue.push_back(i);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (auto q : neighbors(p)) {
        if (core[q] && labels[q] == kNoise) {
          labels[q] = c;
          queue.push_back(q);
        }
      }
    }
  }
  std::vector<int> border(n, kNoise);
  parallel_for(
      n,
      [&](std::size_t i) {
        if (core[i]) return;
        int best = kNoise;
        for (auto q : neighbors(i)) {
          if (core[q] && (best == kNoise || labels[q] < best)) best = labels[q];
        }
        border[i] = best;
      },
      opts.threads);
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) labels[i] = border[i];
  }
  // first-occurrence renumbering
  std::map<int, int> remap;
  for (auto& l : labels) {
    if (l == kNoise) continue;
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    l = it->second;
  }
  return labels;
}

inline std::vector<int> density_cluster(const EmbeddingMatrix& emb, const DbscanOptions& opts = {}) {
  std::vector<std::size_t> rows(emb.n);
  std::iota(rows.begin(), rows.end(), 0);
  return density_cluster(emb, rows, opts);
}

struct ClusterTrace {
  std::vector<int> labels;
  std::vector<std::size_t> sizes;                    // indexed by label
  std::vector<std::array<std::size_t, 24>> growth;  // cumulative count by local hour
  std::size_t noise_count = 0;

  std::size_t clustered() const { return labels.size() - noise_count; }

  // Share of all records held by the k largest clusters.
  double top_k_share(std::size_t k) const {
    std::vector<std::size_t> s = sizes;
    std::sort(s.rbegin(), s.rend());
    std::size_t top = 0;
    for (std::size_t i = 0; i < std::min(k, s.size()); ++i) top += s[i];
    return labels.empty() ? 0.0 : static_cast<double>(top) / static_cast<double>(labels.size());
  }
};

inline ClusterTrace cluster_growth(std::span<const int> labels, std::span<const int> local_hours) {
  if (labels.size() != local_hours.size()) throw Error("cluster_growth: labels and hours differ in length");
  ClusterTrace t;
  t.labels.assign(labels.begin(), labels.end());
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  const auto k = static_cast<std::size_t>(max_label + 1);
  t.sizes.assign(k, 0);
  t.growth.assign(k, {});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      ++t.noise_count;
      continue;
    }
    const int h = local_hours[i];
    if (h < 0 || h > 23) throw Error("cluster_growth: hour out of range");
    const auto c = static_cast<std::size_t>(labels[i]);
    ++t.sizes[c];
    ++t.growth[c][static_cast<std::size_t>(h)];
  }
  for (auto& g : t.growth) {
    for (std::size_t h = 1; h < 24; ++h) g[h] += g[h - 1];
  }
  return t;
}

// ---- power law -------------------------------------------------------------

struct PowerLawFit {
  double exponent = kNaN;  // slope of ln density vs ln size
  double intercept = kNaN;
  std::size_t xmin = 2;
  std::size_t n_points = 0;
  double r2 = kNaN;
  std::vector<double> bin_x;  // geometric bin centers
  std::vector<double> bin_density;
};

// Sizes >= xmin are histogrammed in bins [2^j, 2^(j+1)) (the first clipped
// at xmin), each count normalized by (total * bin width). The fit runs from
// the first non-empty bin up to the first empty one after it: beyond that
// point the tail is too sparse to estimate a density.
inline PowerLawFit powerlaw_fit(std::span<const std::size_t> sizes, std::size_t xmin = 2) {
  if (xmin < 1) throw Error("powerlaw_fit: xmin must be >= 1");
  std::vector<std::size_t> s;
  for (auto v : sizes) {
    if (v >= xmin) s.push_back(v);
  }
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> uniq = s;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) throw DegenerateError("powerlaw_fit: all sizes equal");
  if (uniq.size() < 3) throw DegenerateError("powerlaw_fit: need at least 3 distinct sizes >= xmin");
  PowerLawFit fit;
  fit.xmin = xmin;
  const double total = static_cast<double>(s.size());
  std::size_t lo_pow = 1;
  while (lo_pow * 2 <= xmin) lo_pow *= 2;
  std::vector<double> xs, ys;
  bool started = false;
  for (std::size_t edge = lo_pow; edge <= s.back(); edge *= 2) {
    const std::size_t lo = std::max(edge, xmin);
    const std::size_t hi = edge * 2;
    const auto count = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), hi) -
                                                std::lower_bound(s.begin(), s.end(), lo));
    if (count == 0) {
      if (started) break;
      continue;
    }
    started = true;
    const double width = static_cast<double>(hi - lo);
    xs.push_back(std::log(std::sqrt(static_cast<double>(lo) * static_cast<double>(hi))));
    ys.push_back(std::log(static_cast<double>(count) / (total * width)));
  }
  if (xs.size() < 3) {
    throw DegenerateError("powerlaw_fit: only " + std::to_string(xs.size()) + " populated log bins (need 3)");
  }
  const LogLogLine line = ols_line(xs, ys);
  fit.exponent = line.slope;
  fit.intercept = line.intercept;
  fit.r2 = line.r2;
  fit.n_points = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fit.bin_x.push_back(std::exp(xs[i]));
    fit.bin_density.push_back(std::exp(ys[i]));
  }
  return fit;
}

inline CorrelationResult volume_entropy_correlation(const HeatmapGrid& count_grid, const HeatmapGrid& entropy_grid) {
  HeatmapGrid counts = count_grid;
  for (auto& c : counts.cells) c.mean = c.n > 0 ? std::optional<double>(static_cast<double>(c.n)) : std::nullopt;
  return grid_correlation(counts, entropy_grid);
}

// ---- PCA ---------------------------------------------------------------------

struct PcaProjection {
  std::size_t n = 0;
  std::size_t dims = 2;
  std::vector<double> coords;               // n x dims row-major
  std::vector<double> explained_variance;   // eigenvalues of the chosen axes
  std::vector<double> explained_ratio;      // over total variance
  std::vector<std::vector<double>> axes;    // unit loadings per axis
};

// Projection of centered rows onto the top principal axes; each axis is
// oriented so its largest-magnitude loading is positive.
inline PcaProjection pca_project(const EmbeddingMatrix& emb, std::span<const std::size_t> rows, std::size_t dims = 2) {
  if (rows.size() < 3) throw DegenerateError("pca_project: need at least 3 rows");
  if (dims < 1 || dims > emb.d) throw Error("pca_project: invalid dims");
  const Eigen::MatrixXd cov = sample_covariance(emb, rows);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca_project: eigendecomposition failed");
  const Eigen::VectorXd vals = solver.eigenvalues();
  const Eigen::MatrixXd vecs = solver.eigenvectors();
  const auto d = static_cast<Eigen::Index>(emb.d);
  const double top = vals(d - 1);
  const double total = vals.cwiseMax(0.0).sum();
  const double tol = 1e-12 * std::max(1.0, std::fabs(top));
  if (!(vals(d - static_cast<Eigen::Index>(dims)) > tol)) throw DegenerateError("pca_project: data rank below dims");

  PcaProjection p;
  p.n = rows.size();
  p.dims = dims;
  Eigen::MatrixXd axes(d, static_cast<Eigen::Index>(dims));
  for (std::size_t a = 0; a < dims; ++a) {
    Eigen::VectorXd v = vecs.col(d - 1 - static_cast<Eigen::Index>(a));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(static_cast<Eigen::Index>(a)) = v;
    p.axes.emplace_back(v.data(), v.data() + d);
    const double ev = vals(d - 1 - static_cast<Eigen::Index>(a));
    p.explained_variance.push_back(ev);
    p.explained_ratio.push_back(total > 0 ? ev / total : kNaN);
  }
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  for (auto r : rows) mu += Eigen::Map<const Eigen::VectorXd>(emb.row(r).data(), d);
  mu /= static_cast<double>(rows.size());
  p.coords.resize(rows.size() * dims);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(emb.row(rows[i]).data(), d) - mu;
    const Eigen::VectorXd y = axes.transpose() * x;
    for (std::size_t a = 0; a < dims; ++a) p.coords[i * dims + a] = y(static_cast<Eigen::Index>(a));
  }
  return p;
}

inline PcaProjection pca_project(const EmbeddingMatrix& emb, std::size_t dims = 2) {
  std::vector<std::size_t> rows(emb.n);
  std::iota(rows.begin(), rows.end(), 0);
  return pca_project(emb, rows, dims);
}

}  // namespace chronoseme
