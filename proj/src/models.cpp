#include "exprof/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "exprof/json_eigen.hpp"

namespace exprof {

using nlohmann::json;

json FunctionPredictor::to_json() const {
  throw std::logic_error("function predictors cannot be serialized");
}

// ---------------------------------------------------------------- least squares

Eigen::VectorXd design_row(const FactorSpace& space, const Settings& s) {
  const Eigen::VectorXd x = encode_point(space, s);
  Eigen::VectorXd row(x.size() + 1);
  row[0] = 1.0;
  row.tail(x.size()) = x;
  return row;
}

LeastSquaresModel::LeastSquaresModel(FactorSpace space, std::string response, Eigen::VectorXd coefficients,
                                     double r2, LeverageModel leverage)
    : space_(std::move(space)),
      responses_{std::move(response)},
      coefficients_(std::move(coefficients)),
      r2_(r2),
      leverage_(std::move(leverage)) {
  if (static_cast<std::size_t>(coefficients_.size()) != space_.encoded_dim() + 1)
    throw std::invalid_argument("coefficient count does not match the factor space");
}

std::vector<double> LeastSquaresModel::predict(const Settings& s) const {
  return {design_row(space_, s).dot(coefficients_)};
}

json LeastSquaresModel::to_json() const {
  ExtrapolationModel lev(space_, leverage_);
  return json{{"type", "least_squares"},
              {"space", exprof::to_json(space_)},
              {"response", responses_.front()},
              {"coefficients", vector_to_json(coefficients_)},
              {"r2", r2_},
              {"leverage", lev.to_json()}};
}

std::shared_ptr<LeastSquaresModel> LeastSquaresModel::from_json(const json& j) {
  FactorSpace space = factor_space_from_json(j.at("space"));
  auto lev = ExtrapolationModel::from_json(space, j.at("leverage"));
  return std::make_shared<LeastSquaresModel>(space, j.at("response").get<std::string>(),
                                             vector_from_json(j.at("coefficients")), j.at("r2").get<double>(),
                                             *lev.leverage_model());
}

std::shared_ptr<LeastSquaresModel> fit_least_squares(const Dataset& train, const FactorSpace& space,
                                                     const std::string& response, LeverageRule rule) {
  const auto y_all = numeric_values(train.column(response));
  const auto settings = dataset_settings(train, space);
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    if (std::isnan(y_all[i])) continue;
    const auto& s = settings[i].values;
    if (std::any_of(s.begin(), s.end(), [](double v) { return std::isnan(v); })) continue;
    rows.push_back(design_row(space, settings[i]));
    ys.push_back(y_all[i]);
  }
  const auto p = static_cast<Eigen::Index>(space.encoded_dim() + 1);
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n < p + 1) throw std::invalid_argument("least squares needs at least p+1 complete rows");
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    y[i] = ys[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) throw std::invalid_argument("singular design: factors are linearly dependent");
  Eigen::VectorXd beta = qr.solve(y);
  const double ss_res = (y - x * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  const double r2 = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return std::make_shared<LeastSquaresModel>(space, response, std::move(beta), r2, fit_leverage_model(x, rule));
}

// ---------------------------------------------------------------- missing values

ImputedData apply_missing_policy(const Dataset& data, const FactorSpace& space, MissingPolicy policy) {
  ImputedData out{data, space, Settings{std::vector<double>(space.size(), 0.0)}, {}};
  if (!policy.informative_missing) return out;
  out.fill = factor_centers(data, space);

  std::vector<Column> cols = data.columns();
  std::vector<FactorDef> defs = space.factors();
  for (std::size_t f = 0; f < space.size(); ++f) {
    const auto& def = space[f];
    auto idx = data.find(def.name);
    Column& c = cols[*idx];
    if (c.missing_count() == 0) continue;
    std::vector<double> flag(c.size(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!c.missing[i]) continue;
      flag[i] = 1.0;
      c.missing[i] = false;
      if (c.type == ColumnType::Numeric) {
        c.numbers[i] = out.fill[f];
      } else {
        // the fill is an index into the factor's levels; map to the column's codes
        const auto& level = def.levels()[out.fill.level(f)];
        auto it = std::find(c.levels.begin(), c.levels.end(), level);
        if (it == c.levels.end()) {
          c.levels.push_back(level);
          it = c.levels.end() - 1;
        }
        c.codes[i] = static_cast<int>(it - c.levels.begin());
      }
    }
    const std::string name = def.name + " Missing";
    cols.push_back(Column::numeric(name, std::move(flag), std::vector<bool>(c.size(), false)));
    defs.push_back(FactorDef{name, Continuous{0.0, 1.0}});
    out.indicators.push_back(f);
  }
  out.data = Dataset(std::move(cols));
  out.space = FactorSpace(std::move(defs));
  return out;
}

Dataset inject_missing(const Dataset& data, const std::vector<std::string>& columns, double fraction,
                       std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in [0, 1]");
  std::vector<Column> cols = data.columns();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& name : columns) {
    Column& c = cols[*data.find(name)];
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (unif(rng) >= fraction) continue;
      c.missing[i] = true;
      if (c.type == ColumnType::Numeric)
        c.numbers[i] = 0.0;
      else
        c.codes[i] = -1;
    }
  }
  return Dataset(std::move(cols));
}

// ---------------------------------------------------------------- multi response

MultiResponsePredictor::MultiResponsePredictor(std::vector<PredictorPtr> parts) : parts_(std::move(parts)) {
  if (parts_.empty()) throw std::invalid_argument("need at least one predictor");
  for (const auto& p : parts_) {
    if (!(p->space() == parts_.front()->space()))
      throw std::invalid_argument("predictors disagree on the factor space");
    for (const auto& r : p->responses()) responses_.push_back(r);
  }
}

std::vector<double> MultiResponsePredictor::predict(const Settings& s) const {
  std::vector<double> out;
  for (const auto& p : parts_) {
    auto y = p->predict(s);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

json MultiResponsePredictor::to_json() const {
  json parts = json::array();
  for (const auto& p : parts_) parts.push_back(p->to_json());
  return json{{"type", "multi"}, {"parts", parts}};
}

PredictorPtr predictor_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "least_squares") return LeastSquaresModel::from_json(j);
  if (type == "boosted_tanh") return BoostedTanhNet::from_json(j);
  if (type == "multi") {
    std::vector<PredictorPtr> parts;
    for (const auto& part : j.at("parts")) parts.push_back(predictor_from_json(part));
    return std::make_shared<MultiResponsePredictor>(std::move(parts));
  }
  throw std::invalid_argument("unknown predictor type '" + type + "'");
}

double r_squared(const Predictor& model, const Dataset& data, const std::string& response) {
  const auto& names = model.responses();
  auto it = std::find(names.begin(), names.end(), response);
  if (it == names.end()) throw std::invalid_argument("model has no response '" + response + "'");
  const auto k = static_cast<std::size_t>(it - names.begin());
  const auto y = numeric_values(data.column(response));
  const auto settings = dataset_settings(data, model.space());
  std::vector<double> obs, pred;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (std::isnan(y[i])) continue;
    const auto& s = settings[i].values;
    if (std::any_of(s.begin(), s.end(), [](double v) { return std::isnan(v); }) &&
        dynamic_cast<const LeastSquaresModel*>(&model) != nullptr)
      continue;
    const double yhat = model.predict(settings[i])[k];
    if (!std::isfinite(yhat)) continue;
    obs.push_back(y[i]);
    pred.push_back(yhat);
  }
  if (obs.size() < 2) throw std::invalid_argument("not enough rows to compute R^2");
  double mean = 0;
  for (double v : obs) mean += v;
  mean /= static_cast<double>(obs.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    ss_res += (obs[i] - pred[i]) * (obs[i] - pred[i]);
    ss_tot += (obs[i] - mean) * (obs[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

}  // namespace exprof
