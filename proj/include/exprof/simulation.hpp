#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "exprof/dataset.hpp"
#include "json.hpp"

namespace exprof {

enum class MetricVariant { Regularized, PseudoInverse };
/// How the noise term of X = U D + e is realized.
enum class NoiseModel {
  Matrix,     ///< n x p iid noise; true covariance D'D + I
  Broadcast,  ///< one n x 1 noise column added to every variable; D'D + J
};

struct SimulationScenario {
  std::size_t n = 100;
  std::size_t p = 20;
  std::size_t r = 10;
  std::size_t p_cat = 0;
  std::size_t n_grid = 20;
  std::size_t replicates = 100;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  MetricVariant variant = MetricVariant::Regularized;
  NoiseModel noise = NoiseModel::Matrix;
  /// Fresh in-distribution points per replicate; 0 means n.
  std::size_t n_test = 0;
  double sigma_multiplier = 3.0;
  std::size_t threads = 1;

  void validate() const;
};

nlohmann::json to_json(const SimulationScenario& s);
SimulationScenario scenario_from_json(const nlohmann::json& j);

struct FactorSample {
  Eigen::MatrixXd x;           ///< n x p
  Eigen::MatrixXd loadings;    ///< D, r x p
  Eigen::MatrixXd true_sigma;  ///< p x p
};

/// X = U D + e with U, D and e iid standard normal.
FactorSample simulate_factor_matrix(std::size_t n, std::size_t p, std::size_t r, std::uint64_t seed,
                                    NoiseModel noise = NoiseModel::Matrix);

/// Draws `n` new rows from the same model (same loadings).
Eigen::MatrixXd draw_rows(const Eigen::MatrixXd& loadings, std::size_t n, std::uint64_t seed,
                          NoiseModel noise = NoiseModel::Matrix);

struct GridPoint {
  Eigen::VectorXd x;
  double t2_true = 0.0;
  bool extrapolated = false;  ///< oracle label
};

struct ExtrapolationGrid {
  std::size_t col_a = 0;
  std::size_t col_b = 1;
  double correlation = 0.0;
  std::vector<GridPoint> points;  ///< from the center (rank 1) to the corner
};

/// True T^2 of x under mean 0 and `true_sigma`.
double true_t2(const Eigen::MatrixXd& true_sigma, const Eigen::Ref<const Eigen::VectorXd>& x);
/// Oracle: extrapolation iff P(chi^2_p >= t2) < alpha.
bool oracle_label(double t2, std::size_t p, double alpha);

/// Ray of `n_grid` points from the column means to the box corner that
/// violates the sign of the strongest correlation. `candidates` restricts the
/// pair search (all columns when empty).
ExtrapolationGrid extrapolation_grid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& true_sigma,
                                     std::size_t n_grid, double alpha,
                                     const std::vector<std::size_t>& candidates = {});

/// Continuous matrix turned into a mixed dataset by cutting chosen columns
/// at equally spaced quantiles.
struct Discretization {
  std::vector<std::size_t> columns;       ///< discretized columns, ascending
  std::vector<std::vector<double>> cuts;  ///< interior cut points per column
  Dataset data;
  FactorSpace space;

  /// Settings of a continuous point under the same cuts.
  Settings apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Picks `p_cat` columns at random, each with 2 to 4 levels.
Discretization discretize(const Eigen::MatrixXd& x, std::size_t p_cat, std::uint64_t seed);

/// Level index of value under ascending interior cuts.
std::size_t level_of(double value, const std::vector<double>& cuts);

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::vector<double> grid_t2_true;
  std::vector<bool> grid_label;
  std::vector<double> grid_metric;
  std::vector<bool> grid_flagged;
  double ucl = 0.0;
  /// Oracle negatives among grid and fresh points, pooled.
  std::size_t negatives = 0;
  std::size_t false_positives = 0;
  double fpr = 0.0;
  /// The grid share of the counts above.
  std::size_t grid_negatives = 0;
  std::size_t grid_false_positives = 0;
  /// Spread of training T^2 (sd / mean); ~0 for the pseudo-inverse pathology.
  double train_t2_mean = 0.0;
  double train_t2_sd = 0.0;
};

struct RateCI {
  double rate = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;  ///< replicates contributing
};

struct StudyResult {
  SimulationScenario scenario;
  /// TPR by grid rank (index 0 = center); count 0 when no replicate labels
  /// that rank as extrapolation.
  std::vector<RateCI> tpr;
  /// Pooled over grid negatives and fresh points.
  RateCI fpr;
  /// Per-replicate FPR restricted to grid negatives, and to fresh points.
  RateCI fpr_grid;
  RateCI fpr_fresh;
  std::vector<ReplicateRecord> replicates;

  nlohmann::json summary_json() const;
  /// One row per replicate x grid rank.
  std::string records_csv() const;
  /// Minimal TPR-by-rank plot.
  std::string tpr_svg() const;
};

ReplicateRecord run_replicate(const SimulationScenario& scenario, std::size_t replicate);
StudyResult run_study(const SimulationScenario& scenario);

/// Normal-approximation 95% interval for a mean of 0/1 or [0,1] outcomes.
RateCI normal_ci(const std::vector<double>& values);

/// Training T^2 under the Moore-Penrose inverse of the pair-count sample
/// covariance, plus the matching metric for new points.
struct PseudoInverseT2 {
  Eigen::VectorXd mean;
  Eigen::MatrixXd pinv;
  Eigen::VectorXd t2_train;
  std::size_t rank = 0;
  double t2(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};
PseudoInverseT2 fit_pseudo_inverse_t2(const Eigen::MatrixXd& x);

}  // namespace exprof
