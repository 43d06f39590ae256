#include "exprof/covariance.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace exprof {

namespace {

// Centered values with zeros in missing cells, so cross products over the
// masked matrix only pick up rows where both cells are present.
Eigen::MatrixXd masked_deviations(const EncodedMatrix& m, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd dev = m.values.rowwise() - mean.transpose();
  for (Eigen::Index j = 0; j < dev.cols(); ++j)
    for (Eigen::Index i = 0; i < dev.rows(); ++i)
      if (m.missing(i, j)) dev(i, j) = 0.0;
  return dev;
}

std::string column_label(const EncodedMatrix& m, Eigen::Index j) {
  if (static_cast<std::size_t>(j) < m.columns.size()) return m.columns[static_cast<std::size_t>(j)].label;
  return "column " + std::to_string(j + 1);
}

}  // namespace

PairwiseMoments pairwise_moments(const EncodedMatrix& m, CovDivisor divisor) {
  const Eigen::Index n = m.rows();
  const Eigen::Index p = m.dim();
  PairwiseMoments out;
  out.mean.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (m.missing(i, j)) continue;
      sum += m.values(i, j);
      ++count;
    }
    if (count == 0) throw std::invalid_argument("empty column: " + column_label(m, j));
    out.mean[j] = sum / static_cast<double>(count);
  }

  const Eigen::MatrixXd present = (!m.missing).cast<double>().matrix();
  out.counts = (present.transpose() * present).array().round().cast<int>().matrix();
  const Eigen::MatrixXd dev = masked_deviations(m, out.mean);
  const Eigen::MatrixXd cross = dev.transpose() * dev;

  out.cov.resize(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index l = 0; l < p; ++l) {
      const int nkl = out.counts(k, l);
      const double denom = divisor == CovDivisor::PairCount ? nkl : nkl - 1;
      out.cov(k, l) = (nkl < 2 || denom <= 0) ? 0.0 : cross(k, l) / denom;
    }
  }
  return out;
}

double shrinkage_lambda(const EncodedMatrix& m, const PairwiseMoments& moments) {
  const Eigen::Index n = m.rows();
  const Eigen::Index p = m.dim();
  if (p < 2) return 0.0;
  const Eigen::MatrixXd dev = masked_deviations(m, moments.mean);

  double var_sum = 0.0;
  double sq_sum = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index l = k + 1; l < p; ++l) {
      if (moments.degenerate(k, l)) continue;
      double wsum = 0.0;
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (m.missing(i, k) || m.missing(i, l)) continue;
        wsum += dev(i, k) * dev(i, l);
        ++count;
      }
      const double nk = static_cast<double>(count);
      const double wbar = wsum / nk;
      double ss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (m.missing(i, k) || m.missing(i, l)) continue;
        const double d = dev(i, k) * dev(i, l) - wbar;
        ss += d * d;
      }
      const double s_kl = nk / (nk - 1.0) * wbar;
      const double var_s = nk / ((nk - 1.0) * (nk - 1.0) * (nk - 1.0)) * ss;
      // each unordered pair appears twice in the k != l sums
      var_sum += 2.0 * var_s;
      sq_sum += 2.0 * s_kl * s_kl;
    }
  }
  if (sq_sum <= 0.0) return 1.0;
  return std::clamp(var_sum / sq_sum, 0.0, 1.0);
}

ShrunkCovariance::ShrunkCovariance(Eigen::VectorXd mean, Eigen::MatrixXd sample_cov, double lambda,
                                   Eigen::MatrixXi pair_counts)
    : mean_(std::move(mean)),
      sample_cov_(std::move(sample_cov)),
      lambda_(lambda),
      pair_counts_(std::move(pair_counts)) {
  if (!(lambda_ >= 0.0 && lambda_ <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  const Eigen::Index p = mean_.size();
  if (sample_cov_.rows() != p || sample_cov_.cols() != p)
    throw std::invalid_argument("covariance dimension mismatch");
  if (pair_counts_.size() == 0) pair_counts_ = Eigen::MatrixXi::Zero(p, p);
  target_ = sample_cov_.diagonal();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(target_[j] > 0.0))
      throw std::invalid_argument("zero target variance in column " + std::to_string(j + 1));

  sigma_ = (1.0 - lambda_) * sample_cov_;
  sigma_.diagonal() = target_;
  // symmetrize exactly so the factorization sees a symmetric matrix
  sigma_ = 0.5 * (sigma_ + sigma_.transpose()).eval();
  sigma_.diagonal() = target_;

  llt_.compute(sigma_);
  if (llt_.info() != Eigen::Success && lambda_ > 0.0) {
    jitter_ = 1e-10 * target_.maxCoeff();
    Eigen::MatrixXd jittered = sigma_;
    jittered.diagonal().array() += jitter_;
    llt_.compute(jittered);
  }
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("shrunk covariance is not positive definite (lambda = " +
                             std::to_string(lambda_) + ")");
}

double ShrunkCovariance::quad_form(const Eigen::Ref<const Eigen::VectorXd>& d) const {
  if (d.size() != dim()) throw std::invalid_argument("dimension mismatch in quadratic form");
  const Eigen::VectorXd z = llt_.matrixL().solve(d);
  return z.squaredNorm();
}

Eigen::VectorXd ShrunkCovariance::solve(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  return llt_.solve(b);
}

ShrunkCovariance shrunk_covariance(const EncodedMatrix& m, const ShrinkageOptions& options) {
  PairwiseMoments mom = pairwise_moments(m, options.divisor);
  for (Eigen::Index j = 0; j < mom.cov.rows(); ++j)
    if (!(mom.cov(j, j) > 0.0))
      throw std::invalid_argument("zero target variance (constant column): " + column_label(m, j));
  const double lambda = options.fixed_lambda ? *options.fixed_lambda : shrinkage_lambda(m, mom);
  return ShrunkCovariance(std::move(mom.mean), std::move(mom.cov), lambda, std::move(mom.counts));
}

}  // namespace exprof
