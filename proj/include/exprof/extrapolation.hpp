#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "exprof/covariance.hpp"
#include "exprof/dataset.hpp"
#include "exprof/factor_space.hpp"
#include "json.hpp"

namespace exprof {

enum class MetricKind { Leverage, RegT2 };

std::string to_string(MetricKind kind);

struct MaxLeverage {
  double k = 1.0;
};
struct AverageLeverage {
  double l = 2.0;
};
using LeverageRule = std::variant<MaxLeverage, AverageLeverage>;

/// Leverage of least-squares prediction points, h = x' (X'X)^-1 x.
class LeverageModel {
 public:
  LeverageModel() = default;
  LeverageModel(Eigen::MatrixXd xtx_inv, double max_h, std::size_t n, LeverageRule rule);

  const Eigen::MatrixXd& xtx_inv() const { return xtx_inv_; }
  double max_h() const { return max_h_; }
  /// p / n, the mean training leverage.
  double avg_h() const { return avg_h_; }
  std::size_t p() const { return p_; }
  std::size_t n() const { return n_; }
  const LeverageRule& rule() const { return rule_; }
  double threshold() const;

  /// `x` is a design row (intercept slot first, equal to 1).
  double leverage(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  Eigen::MatrixXd xtx_inv_;
  double max_h_ = 0.0;
  double avg_h_ = 0.0;
  std::size_t p_ = 0;
  std::size_t n_ = 0;
  LeverageRule rule_ = MaxLeverage{};
};

/// Training-row leverages h_ii of `design` (n x p).
Eigen::VectorXd hat_diagonal(const Eigen::MatrixXd& design);

/// Throws std::invalid_argument when X'X is singular; use a regularized T^2
/// model in that case.
LeverageModel fit_leverage_model(const Eigen::MatrixXd& design, LeverageRule rule = MaxLeverage{});

struct RegT2Options {
  ShrinkageOptions shrinkage;
  double sigma_multiplier = 3.0;
};

/// Hotelling's T^2 under the shrinkage covariance, with the control limit
/// UCL = mean(T^2_train) + m * sd(T^2_train).
class RegT2Model {
 public:
  RegT2Model() = default;
  RegT2Model(ShrunkCovariance cov, Eigen::VectorXd t2_train, double sigma_multiplier);
  /// Rebuild from stored statistics (model artifacts).
  RegT2Model(ShrunkCovariance cov, double t2_mean, double t2_sd, double sigma_multiplier);

  const ShrunkCovariance& cov() const { return cov_; }
  const Eigen::VectorXd& t2_train() const { return t2_train_; }
  double t2_mean() const { return t2_mean_; }
  double t2_sd() const { return t2_sd_; }
  double sigma_multiplier() const { return sigma_multiplier_; }
  double ucl() const { return ucl_; }

  /// NaN coordinates are imputed at the training mean. Throws when every
  /// coordinate is missing.
  double t2(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// x - mean with missing coordinates set to 0.
  Eigen::VectorXd deviation(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  ShrunkCovariance cov_;
  Eigen::VectorXd t2_train_;
  double t2_mean_ = 0.0;
  double t2_sd_ = 0.0;
  double sigma_multiplier_ = 3.0;
  double ucl_ = 0.0;
};

RegT2Model fit_regt2_model(const EncodedMatrix& m, const RegT2Options& options = {});

/// UCL from training T^2 values: mean + multiplier * sd (n - 1 divisor).
double control_limit(const Eigen::Ref<const Eigen::VectorXd>& t2_train, double sigma_multiplier = 3.0);

struct ExtrapolationStatus {
  double metric = 0.0;
  double threshold = 0.0;
  bool extrapolated = false;
  MetricKind kind = MetricKind::RegT2;
};

/// Strict: a point exactly at the threshold is not extrapolation.
ExtrapolationStatus classify(double metric_value, double threshold, MetricKind kind = MetricKind::RegT2);

nlohmann::json to_json(const ExtrapolationStatus& s);

struct Interval {
  double low = 0.0;
  double high = -1.0;
  bool empty() const { return low > high; }
  bool contains(double t) const { return t >= low && t <= high; }
};

/// Feasible values of one factor with every other factor held fixed.
struct FeasibleSet {
  bool continuous = true;
  Interval interval;                ///< continuous factors
  std::vector<std::size_t> levels;  ///< discrete factors, ascending
  bool empty() const { return continuous ? interval.empty() : levels.empty(); }
};

/// A fitted metric bound to the factor space it measures.
class ExtrapolationModel {
 public:
  ExtrapolationModel(FactorSpace space, LeverageModel model);
  ExtrapolationModel(FactorSpace space, RegT2Model model);

  const FactorSpace& space() const { return space_; }
  MetricKind kind() const;
  double threshold() const;
  double metric(const Settings& s) const;
  ExtrapolationStatus status(const Settings& s) const;

  const LeverageModel* leverage_model() const { return std::get_if<LeverageModel>(&model_); }
  const RegT2Model* regt2_model() const { return std::get_if<RegT2Model>(&model_); }

  /// The metric as a function of factor `factor`'s value t is
  /// a*t^2 + b*t + c around the given settings; the vector form used by
  /// feasible_interval. Only valid for continuous factors.
  struct Quadratic {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double origin = 0.0;  ///< the polynomial is in (t - origin)
  };
  Quadratic trace_quadratic(const Settings& s, std::size_t factor) const;

  nlohmann::json to_json() const;
  static ExtrapolationModel from_json(const FactorSpace& space, const nlohmann::json& j);

 private:
  /// Encoded vector the metric's quadratic form applies to.
  Eigen::VectorXd metric_vector(const Settings& s) const;

  FactorSpace space_;
  std::variant<LeverageModel, RegT2Model> model_;
};

FeasibleSet feasible_interval(const ExtrapolationModel& model, const Settings& s, std::size_t factor);

/// Exact MVN threshold ((n+1)(n-1)p / (n(n-p))) * F_{1-alpha}(p, n-p).
double f_limit(std::size_t p, std::size_t n, double alpha);

}  // namespace exprof
