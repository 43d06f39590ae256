#include "exprof/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace exprof {

using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Off: return "off";
    case Mode::Warn: return "warn";
    case Mode::Constrain: return "constrain";
  }
  return "off";
}

Mode mode_from_string(const std::string& s) {
  if (s == "off") return Mode::Off;
  if (s == "warn") return Mode::Warn;
  if (s == "constrain") return Mode::Constrain;
  throw std::invalid_argument("unknown mode '" + s + "' (expected off, warn or constrain)");
}

Profiler::Profiler(PredictorPtr predictor, std::shared_ptr<const ExtrapolationModel> extrapolation,
                   std::vector<Goal> goals, Mode mode, Settings center, std::vector<Settings> seeds,
                   std::size_t resolution)
    : predictor_(std::move(predictor)),
      extrapolation_(std::move(extrapolation)),
      mode_(mode),
      start_(std::move(center)),
      seeds_(std::move(seeds)),
      resolution_(resolution) {
  if (!predictor_ || !extrapolation_) throw std::invalid_argument("profiler needs a predictor and a metric");
  if (!(predictor_->space() == extrapolation_->space()))
    throw std::invalid_argument("predictor and extrapolation model use different factor spaces");
  if (resolution_ < 2) throw std::invalid_argument("trace resolution must be at least 2");
  if (!space().contains(start_)) throw std::invalid_argument("start settings lie outside the factor space");
  set_goals(std::move(goals));

  if (mode_ == Mode::Constrain && extrapolation_->status(start_).extrapolated) {
    const Settings* best = nullptr;
    double best_metric = INFINITY;
    for (const auto& s : seeds_) {
      if (!space().contains(s)) continue;
      const double m = extrapolation_->metric(s);
      if (m < best_metric) {
        best_metric = m;
        best = &s;
      }
    }
    if (!best || best_metric > extrapolation_->threshold())
      throw std::invalid_argument("no non-extrapolated start point is available for constrain mode");
    start_ = *best;
  }
  settings_ = start_;
  refresh_status();
}

Profiler init_state(const ModelArtifact& artifact, std::vector<Goal> goals, Mode mode, std::size_t resolution) {
  return Profiler(artifact.predictor, artifact.extrapolation, std::move(goals), mode, artifact.center,
                  artifact.training_rows, resolution);
}

void Profiler::refresh_status() { status_ = extrapolation_->status(settings_); }

void Profiler::set_goals(std::vector<Goal> goals) {
  if (!goals.empty() && goals.size() != predictor_->responses().size())
    throw std::invalid_argument("expected " + std::to_string(predictor_->responses().size()) + " goals, got " +
                                std::to_string(goals.size()));
  for (const auto& g : goals) g.validate();
  goals_ = std::move(goals);
}

double Profiler::desirability(const Settings& s) const {
  if (goals_.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto y = predictor_->predict(s);
  return overall_desirability(goals_, y);
}

void Profiler::set_mode(Mode mode) {
  mode_ = mode;
  if (mode_ == Mode::Constrain && extrapolation_->status(settings_).extrapolated) settings_ = start_;
  refresh_status();
}

SetFactorResult Profiler::set_factor(std::size_t factor, double value) {
  if (factor >= space().size()) throw std::out_of_range("factor index out of range");
  const auto& def = space()[factor];
  {
    Settings probe = settings_;
    probe[factor] = value;
    if (!std::isfinite(value) || !space().contains(probe))
      throw OutOfBoxError("value for factor '" + def.name + "' is outside its range");
  }

  SetFactorResult result;
  double stored = value;
  if (mode_ == Mode::Constrain) {
    const auto fs = feasible_interval(*extrapolation_, settings_, factor);
    if (fs.empty()) {
      stored = settings_[factor];
      result.diagnostic = "factor '" + def.name + "' has no feasible values at the current settings; kept";
    } else if (!fs.continuous) {
      if (std::find(fs.levels.begin(), fs.levels.end(), static_cast<std::size_t>(value)) == fs.levels.end()) {
        stored = settings_[factor];
        result.diagnostic = "level '" + def.levels()[static_cast<std::size_t>(value)] +
                            "' of factor '" + def.name + "' is extrapolated; kept current level";
      }
    } else {
      stored = std::clamp(value, fs.interval.low, fs.interval.high);
      // Rounding at an endpoint can leave the metric a hair above the
      // threshold; pull back towards the (feasible) current value.
      Settings probe = settings_;
      probe[factor] = stored;
      const double thr = extrapolation_->threshold();
      if (extrapolation_->metric(probe) > thr) {
        double good = settings_[factor];
        double bad = stored;
        for (int it = 0; it < 200 && good != bad; ++it) {
          const double mid = 0.5 * (good + bad);
          if (mid == good || mid == bad) break;
          probe[factor] = mid;
          (extrapolation_->metric(probe) > thr ? bad : good) = mid;
        }
        stored = good;
      }
    }
    result.clamped = stored != value;
  }
  settings_[factor] = stored;
  refresh_status();
  result.stored = stored;
  result.status = status_;
  return result;
}

SetFactorResult Profiler::set_factor(const std::string& name, const json& value) {
  const std::size_t f = space().index_of(name);
  double v = 0.0;
  try {
    v = factor_value_from_json(space()[f], value);
  } catch (const std::invalid_argument& e) {
    throw OutOfBoxError(e.what());
  }
  return set_factor(f, v);
}

ProfileTrace Profiler::trace(std::size_t factor) const {
  const auto& def = space()[factor];
  ProfileTrace t;
  t.factor = factor;
  t.name = def.name;
  t.continuous = def.is_continuous();
  if (auto* box = std::get_if<Continuous>(&def.kind)) {
    for (std::size_t k = 0; k < resolution_; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(resolution_ - 1);
      t.grid.push_back(k + 1 == resolution_ ? box->high : box->low + frac * (box->high - box->low));
    }
  } else {
    for (std::size_t l = 0; l < def.level_count(); ++l) t.grid.push_back(static_cast<double>(l));
  }
  const std::size_t n_resp = predictor_->responses().size();
  t.predictions.assign(n_resp, {});
  const double thr = extrapolation_->threshold();
  Settings probe = settings_;
  for (double g : t.grid) {
    probe[factor] = g;
    const auto y = predictor_->predict(probe);
    for (std::size_t r = 0; r < n_resp; ++r) t.predictions[r].push_back(y[r]);
    if (!goals_.empty()) t.desirability.push_back(overall_desirability(goals_, y));
    const double m = extrapolation_->metric(probe);
    t.metric.push_back(m);
    t.feasible.push_back(!classify(m, thr, extrapolation_->kind()).extrapolated);
  }
  t.feasible_set = feasible_interval(*extrapolation_, settings_, factor);
  t.current = settings_[factor];
  t.current_predictions = predictor_->predict(settings_);
  return t;
}

std::vector<ProfileTrace> Profiler::traces() const {
  std::vector<ProfileTrace> out;
  for (std::size_t f = 0; f < space().size(); ++f) out.push_back(trace(f));
  return out;
}

OptimumReport Profiler::optimize_desirability(const GAConfig& config) {
  if (goals_.empty()) throw std::invalid_argument("set a goal for every response before optimizing");
  Objective objective = [this](const Settings& s) { return overall_desirability(goals_, predictor_->predict(s)); };
  Constraint constraint;
  if (mode_ == Mode::Constrain) {
    constraint = [this](const Settings& s) {
      return ConstraintValue{extrapolation_->metric(s), extrapolation_->threshold()};
    };
  }
  OptimumReport report = optimize(objective, constraint, space(), config, seeds_);
  const auto st = extrapolation_->status(report.best);
  report.metric = st.metric;
  report.threshold = st.threshold;
  report.feasible = !st.extrapolated;
  if (mode_ != Mode::Constrain || report.feasible) settings_ = report.best;
  refresh_status();
  return report;
}

json to_json(const FactorSpace& space, const ProfileTrace& t) {
  const auto& def = space[t.factor];
  json j{{"factor", t.name}, {"kind", t.continuous ? "continuous" : (def.is_ordinal() ? "ordinal" : "categorical")}};
  if (t.continuous) {
    j["grid"] = t.grid;
    j["current"] = t.current;
    if (t.feasible_set.empty())
      j["feasible_interval"] = nullptr;
    else
      j["feasible_interval"] = {{"low", t.feasible_set.interval.low}, {"high", t.feasible_set.interval.high}};
  } else {
    json levels = json::array();
    for (double g : t.grid) levels.push_back(def.levels()[static_cast<std::size_t>(g)]);
    j["grid"] = levels;
    j["current"] = def.levels()[static_cast<std::size_t>(t.current)];
    json feasible_levels = json::array();
    for (auto l : t.feasible_set.levels) feasible_levels.push_back(def.levels()[l]);
    j["feasible_levels"] = feasible_levels;
  }
  j["predictions"] = t.predictions;
  j["desirability"] = t.desirability;
  j["metric"] = t.metric;
  j["feasible"] = t.feasible;
  j["current_predictions"] = t.current_predictions;
  return j;
}

json Profiler::state_json() const {
  json goals = json::array();
  for (const auto& g : goals_) goals.push_back(to_json(g));
  const double d = desirability();
  return json{{"v", 1},
              {"mode", to_string(mode_)},
              {"space", to_json(space())},
              {"settings", settings_to_json(space(), settings_)},
              {"responses", predictor_->responses()},
              {"predictions", predict()},
              {"goals", goals},
              {"desirability", std::isnan(d) ? json(nullptr) : json(d)},
              {"status", to_json(status_)},
              {"warning", warning()},
              {"resolution", resolution_}};
}

json Profiler::traces_json() const {
  json out = json::array();
  for (const auto& t : traces()) out.push_back(to_json(space(), t));
  return out;
}

}  // namespace exprof
