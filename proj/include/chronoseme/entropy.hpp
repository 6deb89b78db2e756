#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chronoseme/embeddings.hpp"
#include "chronoseme/knn.hpp"

namespace chronoseme {

inline constexpr double kDistanceFloor = 1e-12;
inline const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);

struct LocalEntropyOptions {
  std::size_t k = 10;
  KnnBackend backend = KnnBackend::kBruteForce;
  std::size_t threads = thread_count();
};

// Per-row H_local = ln r_k (nats), aligned with the bin's row list.
struct LocalEntropyValues {
  std::vector<double> h;
  std::vector<bool> excluded_duplicate;
  std::size_t k = 10;
  bool skipped = false;  // bin had N <= k
};

inline LocalEntropyValues local_entropy(const EmbeddingMatrix& emb, std::span<const std::size_t> rows,
                                        const LocalEntropyOptions& opts = {}) {
  if (opts.k < 1) throw Error("local_entropy: k must be >= 1");
  LocalEntropyValues out;
  out.k = opts.k;
  if (rows.size() <= opts.k) {
    out.skipped = true;
    return out;
  }
  const PointView pts(emb, rows);
  const std::vector<double> rk = kth_neighbor_distances(pts, opts.k, opts.backend, opts.threads);
  out.h.resize(rows.size());
  out.excluded_duplicate.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool dup = rk[i] < kDistanceFloor;
    out.excluded_duplicate[i] = dup;
    out.h[i] = std::log(dup ? kDistanceFloor : rk[i]);
  }
  return out;
}

inline LocalEntropyValues local_entropy(const EmbeddingMatrix& emb, const LocalEntropyOptions& opts = {}) {
  std::vector<std::size_t> rows(emb.n);
  std::iota(rows.begin(), rows.end(), 0);
  return local_entropy(emb, rows, opts);
}

struct GlobalEntropyOptions {
  double epsilon = 1e-6;
  std::size_t n_min = 25;
};

struct GlobalEntropyValue {
  double h = kNaN;
  std::size_t n_samples = 0;
  std::size_t d = 0;
  double epsilon = 1e-6;
  bool rank_deficient = false;
  bool skipped = false;  // n_samples < n_min
};

// Eigenvalues of the sample covariance (n - 1 denominator), ascending,
// clamped at zero.
inline Eigen::VectorXd covariance_eigenvalues(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");
  return solver.eigenvalues().cwiseMax(0.0);
}

inline Eigen::MatrixXd sample_covariance(const EmbeddingMatrix& emb, std::span<const std::size_t> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(emb.d);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = emb.row(rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = r[static_cast<std::size_t>(j)];
  }
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  return (X.transpose() * X) / static_cast<double>(n - 1);
}

// H = 1/2 [d ln(2 pi e) + sum_j ln(lambda_j + eps)]
inline double gaussian_entropy_from_eigenvalues(const Eigen::VectorXd& lambda, double epsilon, bool* rank_deficient) {
  double log_sum = 0.0;
  bool deficient = false;
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    log_sum += std::log(lambda(j) + epsilon);
    deficient = deficient || lambda(j) < epsilon;
  }
  if (rank_deficient) *rank_deficient = deficient;
  return 0.5 * (static_cast<double>(lambda.size()) * kLog2PiE + log_sum);
}

inline GlobalEntropyValue global_entropy(const EmbeddingMatrix& emb, std::span<const std::size_t> rows,
                                         const GlobalEntropyOptions& opts = {}) {
  GlobalEntropyValue v;
  v.n_samples = rows.size();
  v.d = emb.d;
  v.epsilon = opts.epsilon;
  if (rows.size() < std::max<std::size_t>(opts.n_min, 2)) {
    v.skipped = true;
    return v;
  }
  v.h = gaussian_entropy_from_eigenvalues(covariance_eigenvalues(sample_covariance(emb, rows)), opts.epsilon,
                                          &v.rank_deficient);
  return v;
}

inline GlobalEntropyValue global_entropy(const EmbeddingMatrix& emb, const GlobalEntropyOptions& opts = {}) {
  std::vector<std::size_t> rows(emb.n);
  std::iota(rows.begin(), rows.end(), 0);
  return global_entropy(emb, rows, opts);
}

}  // namespace chronoseme
