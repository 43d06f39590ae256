#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "exprof/dataset.hpp"
#include "exprof/extrapolation.hpp"
#include "exprof/factor_space.hpp"
#include "json.hpp"

namespace exprof {

/// Anything the profiler can explore: maps factor settings to one value per
/// response. Implementations must be deterministic and safe to call from
/// several threads at once.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const FactorSpace& space() const = 0;
  virtual const std::vector<std::string>& responses() const = 0;
  virtual std::vector<double> predict(const Settings& s) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

/// Wraps a callable; handy for external models and tests.
class FunctionPredictor final : public Predictor {
 public:
  using Fn = std::function<std::vector<double>(const Settings&)>;
  FunctionPredictor(FactorSpace space, std::vector<std::string> responses, Fn fn)
      : space_(std::move(space)), responses_(std::move(responses)), fn_(std::move(fn)) {}

  const FactorSpace& space() const override { return space_; }
  const std::vector<std::string>& responses() const override { return responses_; }
  std::vector<double> predict(const Settings& s) const override { return fn_(s); }
  nlohmann::json to_json() const override;

 private:
  FactorSpace space_;
  std::vector<std::string> responses_;
  Fn fn_;
};

/// Main-effects least squares: intercept plus the encoded factors.
class LeastSquaresModel final : public Predictor {
 public:
  LeastSquaresModel(FactorSpace space, std::string response, Eigen::VectorXd coefficients, double r2,
                    LeverageModel leverage);

  const FactorSpace& space() const override { return space_; }
  const std::vector<std::string>& responses() const override { return responses_; }
  std::vector<double> predict(const Settings& s) const override;
  nlohmann::json to_json() const override;

  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  double r2() const { return r2_; }
  const LeverageModel& leverage() const { return leverage_; }

  static std::shared_ptr<LeastSquaresModel> from_json(const nlohmann::json& j);

 private:
  FactorSpace space_;
  std::vector<std::string> responses_;
  Eigen::VectorXd coefficients_;
  double r2_;
  LeverageModel leverage_;
};

/// Intercept column followed by encode_point(space, s).
Eigen::VectorXd design_row(const FactorSpace& space, const Settings& s);

/// Rows with a missing factor or response are dropped. Throws when the
/// design is rank deficient or too short.
std::shared_ptr<LeastSquaresModel> fit_least_squares(const Dataset& train, const FactorSpace& space,
                                                     const std::string& response,
                                                     LeverageRule rule = MaxLeverage{});

/// One hidden tanh layer, linear output: f(x) = v' tanh(W x + b) + c.
class TanhNet {
 public:
  TanhNet() = default;
  TanhNet(Eigen::Index inputs, Eigen::Index hidden);

  Eigen::Index inputs() const { return weights_.cols(); }
  Eigen::Index hidden() const { return weights_.rows(); }

  double forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// One output per row of `x`.
  Eigen::VectorXd forward_rows(const Eigen::MatrixXd& x) const;
  /// tanh(W x + b) for every row of `x` (rows x hidden).
  Eigen::MatrixXd activations(const Eigen::MatrixXd& x) const;

  /// Flattened [W (row-major), b, v, c].
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta);

  /// 1/(2n) sum (f(x_i) - y_i)^2 + decay/2 * ||W||^2.
  double loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double decay) const;
  /// Analytic gradient of loss() in parameters() order.
  Eigen::VectorXd gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double decay) const;

  Eigen::MatrixXd& weights() { return weights_; }
  Eigen::VectorXd& bias() { return bias_; }
  Eigen::VectorXd& output() { return output_; }
  double& output_bias() { return output_bias_; }

  nlohmann::json to_json() const;
  static TanhNet from_json(const nlohmann::json& j);

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
  Eigen::VectorXd output_;
  double output_bias_ = 0.0;
};

struct BoostConfig {
  Eigen::Index neurons = 3;
  std::size_t stages = 20;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
  std::size_t iterations = 600;  ///< gradient steps per stage
  double step = 0.1;
  double weight_decay = 1e-4;
  bool informative_missing = false;
};

/// Missing-value handling for models that cannot skip cells.
struct MissingPolicy {
  bool informative_missing = false;
};

struct ImputedData {
  Dataset data;
  FactorSpace space;  ///< original factors plus one 0/1 indicator per factor with missing cells
  /// Fill value per original factor (mean, or modal level index).
  Settings fill;
  /// Original factor index for each indicator, in the order appended.
  std::vector<std::size_t> indicators;
};

/// Mean-imputes continuous factors (modal level for discrete ones) and adds a
/// "<name> Missing" indicator for each factor that had missing cells. With
/// the policy off the data and space pass through unchanged.
ImputedData apply_missing_policy(const Dataset& data, const FactorSpace& space, MissingPolicy policy);

/// Sets `fraction` of the factor cells to missing, uniformly at random.
Dataset inject_missing(const Dataset& data, const std::vector<std::string>& columns, double fraction,
                       std::uint64_t seed);

/// Gradient-boosted single-hidden-layer tanh networks on squared error.
class BoostedTanhNet final : public Predictor {
 public:
  struct Stage {
    TanhNet net;
    double train_loss = 0.0;  ///< mean squared error after adding the stage
  };

  const FactorSpace& space() const override { return space_; }
  const std::vector<std::string>& responses() const override { return responses_; }
  std::vector<double> predict(const Settings& s) const override;
  nlohmann::json to_json() const override;

  double base() const { return base_; }
  double learning_rate() const { return learning_rate_; }
  const std::vector<Stage>& stages() const { return stages_; }
  /// Training MSE with 0..n stages.
  std::vector<double> loss_history() const;
  /// Stage outputs (before the learning rate) at a point.
  std::vector<double> stage_outputs(const Settings& s) const;
  double train_r2() const { return train_r2_; }

  static std::shared_ptr<BoostedTanhNet> from_json(const nlohmann::json& j);

 private:
  friend std::shared_ptr<BoostedTanhNet> fit_boosted_tanh(const Dataset&, const FactorSpace&,
                                                          const std::string&, const BoostConfig&);
  Eigen::VectorXd input(const Settings& s) const;

  FactorSpace space_;
  std::vector<std::string> responses_;
  FactorSpace input_space_;  ///< space_ plus missing indicators
  Settings fill_;
  std::vector<std::size_t> indicators_;
  Eigen::VectorXd input_mean_;
  Eigen::VectorXd input_scale_;
  double base_ = 0.0;
  double base_loss_ = 0.0;
  double learning_rate_ = 0.5;
  double train_r2_ = 0.0;
  std::vector<Stage> stages_;
};

/// Throws std::runtime_error naming the stage when the loss stops being finite.
std::shared_ptr<BoostedTanhNet> fit_boosted_tanh(const Dataset& train, const FactorSpace& space,
                                                 const std::string& response, const BoostConfig& config);

/// Several single-response predictors over one factor space.
class MultiResponsePredictor final : public Predictor {
 public:
  explicit MultiResponsePredictor(std::vector<PredictorPtr> parts);

  const FactorSpace& space() const override { return parts_.front()->space(); }
  const std::vector<std::string>& responses() const override { return responses_; }
  std::vector<double> predict(const Settings& s) const override;
  nlohmann::json to_json() const override;

  const std::vector<PredictorPtr>& parts() const { return parts_; }

 private:
  std::vector<PredictorPtr> parts_;
  std::vector<std::string> responses_;
};

/// Rebuilds a stored least-squares, boosted or multi-response predictor.
PredictorPtr predictor_from_json(const nlohmann::json& j);

/// Coefficient of determination of `model`'s first matching response on the
/// complete rows of `data`.
double r_squared(const Predictor& model, const Dataset& data, const std::string& response);

}  // namespace exprof
