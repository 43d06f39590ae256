#pragma once

#include <optional>

#include <Eigen/Dense>

#include "exprof/dataset.hpp"

namespace exprof {

/// Divisor used for each covariance entry u^{kl}.
enum class CovDivisor {
  PairCount,          ///< n_kl, the "biased" moment.
  PairCountMinusOne,  ///< n_kl - 1, the unbiased sample covariance.
};

struct PairwiseMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  /// n_kl: rows where both column k and column l are observed.
  Eigen::MatrixXi counts;

  /// Entries with fewer than two shared rows are set to 0.
  bool degenerate(Eigen::Index k, Eigen::Index l) const { return counts(k, l) < 2; }
};

/// Means over each column's observed cells; covariances over rows where both
/// cells of a pair are observed (pairwise deletion).
PairwiseMoments pairwise_moments(const EncodedMatrix& m, CovDivisor divisor = CovDivisor::PairCount);

/// Analytic shrinkage intensity towards the diagonal target (unequal
/// variances): sum_{k!=l} Var(s_kl) / sum_{k!=l} s_kl^2, clamped to [0, 1].
/// Var(s_kl) = n/(n-1)^3 * sum_i (w_ikl - mean w_kl)^2 with n = n_kl.
/// Returns 0 for p = 1 and 1 when the denominator vanishes.
double shrinkage_lambda(const EncodedMatrix& m, const PairwiseMoments& moments);

struct ShrinkageOptions {
  /// Overrides the analytic lambda (e.g. 0 for the plain sample covariance).
  std::optional<double> fixed_lambda;
  CovDivisor divisor = CovDivisor::PairCount;
};

/// sigma = (1 - lambda) U + lambda D with D = diag(U).
class ShrunkCovariance {
 public:
  ShrunkCovariance() = default;
  ShrunkCovariance(Eigen::VectorXd mean, Eigen::MatrixXd sample_cov, double lambda,
                   Eigen::MatrixXi pair_counts);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& sample_cov() const { return sample_cov_; }
  const Eigen::VectorXd& target() const { return target_; }
  double lambda() const { return lambda_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::MatrixXi& pair_counts() const { return pair_counts_; }
  Eigen::Index dim() const { return mean_.size(); }
  /// Diagonal jitter added to make the factorization succeed (usually 0).
  double jitter() const { return jitter_; }

  /// d' sigma^-1 d.
  double quad_form(const Eigen::Ref<const Eigen::VectorXd>& d) const;
  /// sigma^-1 b.
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& b) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd sample_cov_;
  Eigen::VectorXd target_;
  double lambda_ = 0.0;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXi pair_counts_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Throws std::invalid_argument naming the column when a target variance is
/// zero, std::runtime_error when sigma cannot be factorized.
ShrunkCovariance shrunk_covariance(const EncodedMatrix& m, const ShrinkageOptions& options = {});

}  // namespace exprof
