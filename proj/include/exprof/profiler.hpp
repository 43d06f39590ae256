#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exprof/artifact.hpp"
#include "exprof/desirability.hpp"
#include "exprof/extrapolation.hpp"
#include "exprof/models.hpp"
#include "exprof/optimizer.hpp"
#include "json.hpp"

namespace exprof {

enum class Mode { Off, Warn, Constrain };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Cross-section of the prediction surface along one factor.
struct ProfileTrace {
  std::size_t factor = 0;
  std::string name;
  bool continuous = true;
  /// Factor values (level indices for discrete factors).
  std::vector<double> grid;
  /// predictions[r][k]: response r at grid point k.
  std::vector<std::vector<double>> predictions;
  /// Overall desirability per grid point; empty without goals.
  std::vector<double> desirability;
  std::vector<double> metric;
  std::vector<bool> feasible;
  FeasibleSet feasible_set;
  double current = 0.0;
  std::vector<double> current_predictions;
};

struct SetFactorResult {
  ExtrapolationStatus status;
  double stored = 0.0;
  bool clamped = false;
  /// Set when a constrained request could not be honored.
  std::optional<std::string> diagnostic;
};

/// Thrown when a requested factor value lies outside its box or level set.
class OutOfBoxError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Interactive profiler session state: settings, mode, goals and the
/// extrapolation status of the current point.
class Profiler {
 public:
  /// Starts at `center` (training means / modal levels). In Constrain mode
  /// an extrapolated center is replaced by the least extrapolated seed row.
  Profiler(PredictorPtr predictor, std::shared_ptr<const ExtrapolationModel> extrapolation, std::vector<Goal> goals,
           Mode mode, Settings center, std::vector<Settings> seeds = {}, std::size_t resolution = 101);

  const FactorSpace& space() const { return predictor_->space(); }
  const Predictor& predictor() const { return *predictor_; }
  const ExtrapolationModel& extrapolation() const { return *extrapolation_; }
  const Settings& settings() const { return settings_; }
  Mode mode() const { return mode_; }
  const std::vector<Goal>& goals() const { return goals_; }
  std::size_t resolution() const { return resolution_; }

  ExtrapolationStatus status() const { return status_; }
  /// Whether the UI should flag the current point: never in Off mode.
  bool warning() const { return mode_ != Mode::Off && status_.extrapolated; }

  std::vector<double> predict() const { return predictor_->predict(settings_); }
  std::vector<double> predict(const Settings& s) const { return predictor_->predict(s); }
  /// NaN when no goals are set.
  double desirability(const Settings& s) const;
  double desirability() const { return desirability(settings_); }

  /// Throws OutOfBoxError for values outside the factor's box or levels.
  SetFactorResult set_factor(std::size_t factor, double value);
  SetFactorResult set_factor(const std::string& name, const nlohmann::json& value);

  /// Entering Constrain mode from an extrapolated point moves back to the
  /// start point.
  void set_mode(Mode mode);
  void set_goals(std::vector<Goal> goals);

  ProfileTrace trace(std::size_t factor) const;
  std::vector<ProfileTrace> traces() const;

  /// GA over the whole space; constrained only in Constrain mode. Moves the
  /// state to the optimum and reports the metric there.
  OptimumReport optimize_desirability(const GAConfig& config = {});

  nlohmann::json state_json() const;
  nlohmann::json traces_json() const;

 private:
  void refresh_status();

  PredictorPtr predictor_;
  std::shared_ptr<const ExtrapolationModel> extrapolation_;
  std::vector<Goal> goals_;
  Mode mode_;
  Settings start_;
  Settings settings_;
  std::vector<Settings> seeds_;
  std::size_t resolution_;
  ExtrapolationStatus status_;
};

Profiler init_state(const ModelArtifact& artifact, std::vector<Goal> goals, Mode mode, std::size_t resolution = 101);

nlohmann::json to_json(const FactorSpace& space, const ProfileTrace& t);

}  // namespace exprof
