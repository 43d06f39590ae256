#pragma once

// Brute-force reference computations used by the tests. They are written
// against the textbook formulas with plain loops and explicit inverses,
// independent of the library's code paths.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Rows = std::vector<std::vector<double>>;  // NaN = missing

inline Rows to_rows(const Eigen::MatrixXd& x) {
  Rows r(static_cast<std::size_t>(x.rows()), std::vector<double>(static_cast<std::size_t>(x.cols())));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) r[i][j] = x(i, j);
  return r;
}

inline double column_mean(const Rows& x, std::size_t k) {
  double s = 0;
  int c = 0;
  for (const auto& row : x)
    if (!std::isnan(row[k])) {
      s += row[k];
      ++c;
    }
  return s / c;
}

/// Shrinkage intensity for the diagonal ("unequal variance") target:
/// sum over ordered pairs k != l of Var(s_kl) over sum of s_kl^2, where for
/// the rows observing both columns w_i = (x_ik - m_k)(x_il - m_l),
/// s_kl = n/(n-1) mean(w) and Var(s_kl) = n/(n-1)^3 sum (w_i - mean w)^2.
inline double shrinkage_lambda(const Rows& x) {
  const std::size_t p = x.front().size();
  if (p == 1) return 0.0;
  std::vector<double> mean(p);
  for (std::size_t k = 0; k < p; ++k) mean[k] = column_mean(x, k);
  double num = 0, den = 0;
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t l = 0; l < p; ++l) {
      if (k == l) continue;
      std::vector<double> w;
      for (const auto& row : x)
        if (!std::isnan(row[k]) && !std::isnan(row[l])) w.push_back((row[k] - mean[k]) * (row[l] - mean[l]));
      if (w.size() < 2) continue;
      const double n = static_cast<double>(w.size());
      const double wbar = std::accumulate(w.begin(), w.end(), 0.0) / n;
      double ss = 0;
      for (double v : w) ss += (v - wbar) * (v - wbar);
      const double s = n / (n - 1) * wbar;
      num += n / std::pow(n - 1, 3) * ss;
      den += s * s;
    }
  }
  if (den == 0) return 1.0;
  return std::min(1.0, std::max(0.0, num / den));
}

/// Pairwise-deletion covariance with the pair-count divisor.
inline Eigen::MatrixXd pairwise_cov(const Rows& x) {
  const std::size_t p = x.front().size();
  std::vector<double> mean(p);
  for (std::size_t k = 0; k < p; ++k) mean[k] = column_mean(x, k);
  Eigen::MatrixXd c(p, p);
  for (std::size_t k = 0; k < p; ++k)
    for (std::size_t l = 0; l < p; ++l) {
      double s = 0;
      int n = 0;
      for (const auto& row : x)
        if (!std::isnan(row[k]) && !std::isnan(row[l])) {
          s += (row[k] - mean[k]) * (row[l] - mean[l]);
          ++n;
        }
      c(k, l) = n < 2 ? 0.0 : s / n;
    }
  return c;
}

/// Hat matrix X (X'X)^-1 X' via the explicit inverse.
inline Eigen::MatrixXd hat_matrix(const Eigen::MatrixXd& x) {
  return x * (x.transpose() * x).inverse() * x.transpose();
}

/// (x - mu)' S^-1 (x - mu) via the explicit inverse.
inline double mahalanobis(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& s) {
  const Eigen::VectorXd d = x - mu;
  return d.dot(s.inverse() * d);
}

/// Ranks (1-based, no tie handling) for Spearman correlation.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k + 1);
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

inline Eigen::MatrixXd random_normal(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = z(rng);
  return x;
}

/// Correlated normal rows: Z L' with a random lower-triangular L.
inline Eigen::MatrixXd random_correlated(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  Eigen::MatrixXd l = random_normal(p, p, rng).triangularView<Eigen::Lower>();
  l.diagonal().array() = l.diagonal().array().abs() + 0.5;
  return random_normal(n, p, rng) * l.transpose();
}

}  // namespace oracle
