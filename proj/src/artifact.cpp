#include "exprof/artifact.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace exprof {

using nlohmann::json;

json ModelArtifact::to_json() const {
  const auto& sp = space();
  json rows = json::array();
  for (const auto& r : training_rows) rows.push_back(settings_to_json(sp, r));
  json ranges = json::array();
  for (const auto& [lo, hi] : response_ranges) ranges.push_back({lo, hi});
  return json{{"v", 1},
              {"space", exprof::to_json(sp)},
              {"responses", predictor->responses()},
              {"predictor", predictor->to_json()},
              {"extrapolation", extrapolation->to_json()},
              {"center", settings_to_json(sp, center)},
              {"training_rows", rows},
              {"response_ranges", ranges}};
}

ModelArtifact ModelArtifact::from_json(const json& j) {
  if (j.value("v", 0) != 1) throw std::invalid_argument("unsupported model artifact version");
  ModelArtifact a;
  a.predictor = predictor_from_json(j.at("predictor"));
  const auto& sp = a.predictor->space();
  if (!(factor_space_from_json(j.at("space")) == sp))
    throw std::invalid_argument("artifact factor space does not match its predictor");
  a.extrapolation = std::make_shared<ExtrapolationModel>(ExtrapolationModel::from_json(sp, j.at("extrapolation")));
  a.center = settings_from_json(sp, j.at("center"));
  for (const auto& r : j.at("training_rows")) a.training_rows.push_back(settings_from_json(sp, r));
  for (const auto& r : j.at("response_ranges")) a.response_ranges.emplace_back(r.at(0), r.at(1));
  return a;
}

void ModelArtifact::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_json().dump(1) << '\n';
}

ModelArtifact ModelArtifact::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  return from_json(json::parse(in));
}

ModelArtifact fit_artifact(const Dataset& train, const FactorSpace& space, const FitOptions& options) {
  if (options.responses.empty()) throw std::invalid_argument("no response given");
  for (const auto& r : options.responses) {
    if (!train.find(r)) throw std::invalid_argument("response column '" + r + "' not found");
    if (space.find(r)) throw std::invalid_argument("response '" + r + "' is also a factor");
  }

  ModelArtifact a;
  std::vector<PredictorPtr> parts;
  std::shared_ptr<const LeastSquaresModel> first_ls;
  for (const auto& r : options.responses) {
    if (options.kind == ModelKind::LeastSquares) {
      auto m = fit_least_squares(train, space, r, options.leverage_rule);
      if (!first_ls) first_ls = m;
      parts.push_back(std::move(m));
    } else {
      BoostConfig cfg = options.boost;
      cfg.informative_missing = options.informative_missing;
      parts.push_back(fit_boosted_tanh(train, space, r, cfg));
    }
    const auto y = numeric_values(train.column(r));
    double lo = INFINITY, hi = -INFINITY;
    for (double v : y)
      if (!std::isnan(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    a.response_ranges.emplace_back(lo, hi);
  }
  a.predictor = parts.size() == 1 ? parts.front() : std::make_shared<MultiResponsePredictor>(std::move(parts));

  if (first_ls) {
    a.extrapolation = std::make_shared<ExtrapolationModel>(space, first_ls->leverage());
  } else {
    a.extrapolation = std::make_shared<ExtrapolationModel>(space, fit_regt2_model(encode(train, space), options.regt2));
  }
  a.center = factor_centers(train, space);
  a.training_rows = dataset_settings(train, space);
  return a;
}

}  // namespace exprof
