#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "exprof/dataset.hpp"
#include "exprof/extrapolation.hpp"
#include "exprof/models.hpp"
#include "json.hpp"

namespace exprof {

/// Everything a profiler session needs from a fit: the predictor, the
/// extrapolation metric, where sliders start, and the training rows used to
/// seed the optimizer.
struct ModelArtifact {
  PredictorPtr predictor;
  std::shared_ptr<const ExtrapolationModel> extrapolation;
  Settings center;
  std::vector<Settings> training_rows;
  /// Observed [min, max] per response.
  std::vector<std::pair<double, double>> response_ranges;

  const FactorSpace& space() const { return predictor->space(); }

  nlohmann::json to_json() const;
  static ModelArtifact from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static ModelArtifact load(const std::filesystem::path& path);
};

enum class ModelKind { LeastSquares, Boosted };

struct FitOptions {
  ModelKind kind = ModelKind::LeastSquares;
  std::vector<std::string> responses;
  bool informative_missing = false;
  BoostConfig boost;
  /// Least squares only.
  LeverageRule leverage_rule = MaxLeverage{};
  /// Boosted models only.
  RegT2Options regt2;
};

/// Fits one predictor per response over `space` and attaches the metric:
/// leverage for least squares, regularized T^2 (pairwise deletion) otherwise.
ModelArtifact fit_artifact(const Dataset& train, const FactorSpace& space, const FitOptions& options);

}  // namespace exprof
