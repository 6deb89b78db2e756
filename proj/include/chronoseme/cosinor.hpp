#pragma once

#include <cmath>
#include <numbers>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "chronoseme/common.hpp"
#include "chronoseme/stats.hpp"

namespace chronoseme {

inline constexpr double kOmega = 2.0 * std::numbers::pi / 24.0;  // rad per hour

// Single-component 24-h cosinor: y(t) = M + beta_cos cos(wt) + beta_sin sin(wt) + e(t).
struct CosinorFit {
  double mesor = kNaN;
  double beta_cos = kNaN;
  double beta_sin = kNaN;
  double amplitude = kNaN;
  double acrophase_h = kNaN;  // [0, 24)
  double omega = kOmega;
  double r2 = kNaN;
  double rss_full = kNaN;
  double rss_null = kNaN;
  std::size_t n_points = 0;
  double p_lr = kNaN;
  double p_fdr = kNaN;
  std::vector<double> residuals;

  double predict(double t) const { return mesor + beta_cos * std::cos(omega * t) + beta_sin * std::sin(omega * t); }
};

// Maps any hour value into [0, 24).
inline double wrap_hours(double h) {
  double w = std::fmod(h, 24.0);
  if (w < 0.0) w += 24.0;
  if (w >= 24.0) w -= 24.0;
  return w;
}

inline CosinorFit cosinor_fit(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw Error("cosinor_fit: length mismatch");
  if (std::set<double>(t.begin(), t.end()).size() < 4) {
    throw DegenerateError("cosinor_fit: need at least 4 distinct time points");
  }
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    X(i, 0) = 1.0;
    X(i, 1) = std::cos(kOmega * t[ui]);
    X(i, 2) = std::sin(kOmega * t[ui]);
    Y(i) = y[ui];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw DegenerateError("cosinor_fit: rank-deficient design");
  const Eigen::Vector3d beta = qr.solve(Y);

  CosinorFit fit;
  fit.n_points = t.size();
  fit.mesor = beta(0);
  fit.beta_cos = beta(1);
  fit.beta_sin = beta(2);
  fit.amplitude = std::sqrt(fit.beta_cos * fit.beta_cos + fit.beta_sin * fit.beta_sin);
  fit.acrophase_h = wrap_hours(std::atan2(fit.beta_sin, fit.beta_cos) / kOmega);
  const Eigen::VectorXd resid = Y - X * beta;
  fit.residuals.assign(resid.data(), resid.data() + n);
  fit.rss_full = 0.0;
  for (double e : fit.residuals) fit.rss_full += e * e;
  const double ybar = mean(y);
  fit.rss_null = 0.0;
  for (double v : y) fit.rss_null += (v - ybar) * (v - ybar);
  fit.r2 = fit.rss_null > 0.0 ? std::clamp(1.0 - fit.rss_full / fit.rss_null, 0.0, 1.0) : 0.0;
  return fit;
}

// Gaussian likelihood ratio against the mean-only model:
// Lambda = n ln(RSS_null / RSS_full), p = P(chi2_2 > Lambda).
inline double lr_test(const CosinorFit& fit) {
  if (!(fit.rss_null > 0.0)) return 1.0;
  if (!(fit.rss_full > 0.0)) return 0.0;
  const double lambda = static_cast<double>(fit.n_points) * std::log(fit.rss_null / fit.rss_full);
  return chi2_sf_df2(lambda);
}

inline CosinorFit cosinor_fit_with_test(std::span<const double> t, std::span<const double> y) {
  CosinorFit fit = cosinor_fit(t, y);
  fit.p_lr = lr_test(fit);
  return fit;
}

}  // namespace chronoseme
