#include "exprof/extrapolation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/fisher_f.hpp>

#include "exprof/json_eigen.hpp"

namespace exprof {

using nlohmann::json;

std::string to_string(MetricKind kind) { return kind == MetricKind::Leverage ? "leverage" : "regt2"; }

// ---------------------------------------------------------------- leverage

LeverageModel::LeverageModel(Eigen::MatrixXd xtx_inv, double max_h, std::size_t n, LeverageRule rule)
    : xtx_inv_(std::move(xtx_inv)), max_h_(max_h), n_(n), rule_(rule) {
  p_ = static_cast<std::size_t>(xtx_inv_.rows());
  if (n_ == 0 || p_ == 0) throw std::invalid_argument("empty leverage model");
  avg_h_ = static_cast<double>(p_) / static_cast<double>(n_);
  if (!(threshold() > 0.0)) throw std::invalid_argument("leverage threshold must be positive");
}

double LeverageModel::threshold() const {
  if (auto* r = std::get_if<MaxLeverage>(&rule_)) return r->k * max_h_;
  return std::get<AverageLeverage>(rule_).l * avg_h_;
}

double LeverageModel::leverage(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != xtx_inv_.rows()) throw std::invalid_argument("leverage: dimension mismatch");
  return std::max(0.0, x.dot(xtx_inv_ * x));
}

Eigen::VectorXd hat_diagonal(const Eigen::MatrixXd& design) {
  Eigen::LLT<Eigen::MatrixXd> llt(design.transpose() * design);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("X'X is singular");
  // h_ii = ||L^-1 x_i||^2
  const Eigen::MatrixXd z = llt.matrixL().solve(design.transpose());
  return z.colwise().squaredNorm().transpose();
}

LeverageModel fit_leverage_model(const Eigen::MatrixXd& design, LeverageRule rule) {
  const Eigen::Index p = design.cols();
  if (design.rows() <= p) throw std::invalid_argument("leverage model needs more rows than columns");
  const Eigen::MatrixXd xtx = design.transpose() * design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  if (qr.rank() < p || llt.info() != Eigen::Success)
    throw std::invalid_argument("X'X is singular; use the regularized T^2 metric for this design");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  inv = 0.5 * (inv + inv.transpose()).eval();
  const Eigen::VectorXd h = hat_diagonal(design);
  return LeverageModel(std::move(inv), h.maxCoeff(), static_cast<std::size_t>(design.rows()), rule);
}

// ---------------------------------------------------------------- T^2

double control_limit(const Eigen::Ref<const Eigen::VectorXd>& t2_train, double sigma_multiplier) {
  const Eigen::Index n = t2_train.size();
  if (n == 0) throw std::invalid_argument("control limit needs training values");
  const double mean = t2_train.mean();
  const double sd = n > 1 ? std::sqrt((t2_train.array() - mean).square().sum() / double(n - 1)) : 0.0;
  return mean + sigma_multiplier * sd;
}

RegT2Model::RegT2Model(ShrunkCovariance cov, Eigen::VectorXd t2_train, double sigma_multiplier)
    : cov_(std::move(cov)), t2_train_(std::move(t2_train)), sigma_multiplier_(sigma_multiplier) {
  const Eigen::Index n = t2_train_.size();
  if (n < 2) throw std::invalid_argument("need at least two training T^2 values");
  t2_mean_ = t2_train_.mean();
  t2_sd_ = std::sqrt((t2_train_.array() - t2_mean_).square().sum() / double(n - 1));
  ucl_ = t2_mean_ + sigma_multiplier_ * t2_sd_;
}

RegT2Model::RegT2Model(ShrunkCovariance cov, double t2_mean, double t2_sd, double sigma_multiplier)
    : cov_(std::move(cov)),
      t2_mean_(t2_mean),
      t2_sd_(t2_sd),
      sigma_multiplier_(sigma_multiplier),
      ucl_(t2_mean + sigma_multiplier * t2_sd) {}

Eigen::VectorXd RegT2Model::deviation(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != cov_.dim()) throw std::invalid_argument("T^2: dimension mismatch");
  Eigen::VectorXd d = x - cov_.mean();
  bool any = false;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (std::isnan(x[j]))
      d[j] = 0.0;
    else
      any = true;
  }
  if (!any) throw std::invalid_argument("T^2: every coordinate is missing");
  return d;
}

double RegT2Model::t2(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return cov_.quad_form(deviation(x));
}

RegT2Model fit_regt2_model(const EncodedMatrix& m, const RegT2Options& options) {
  if (m.rows() < 3) throw std::invalid_argument("regularized T^2 needs at least 3 rows");
  ShrunkCovariance cov = shrunk_covariance(m, options.shrinkage);
  Eigen::VectorXd t2(m.rows());
  Eigen::VectorXd row(m.dim());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.dim(); ++j)
      row[j] = m.missing(i, j) ? std::numeric_limits<double>::quiet_NaN() : m.values(i, j);
    // rows with nothing observed sit at the mean
    bool any = false;
    for (Eigen::Index j = 0; j < m.dim(); ++j) any = any || !m.missing(i, j);
    if (!any) {
      t2[i] = 0.0;
      continue;
    }
    Eigen::VectorXd d = row - cov.mean();
    for (Eigen::Index j = 0; j < m.dim(); ++j)
      if (m.missing(i, j)) d[j] = 0.0;
    t2[i] = cov.quad_form(d);
  }
  return RegT2Model(std::move(cov), std::move(t2), options.sigma_multiplier);
}

// ---------------------------------------------------------------- status

ExtrapolationStatus classify(double metric_value, double threshold, MetricKind kind) {
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  return {metric_value, threshold, metric_value > threshold, kind};
}

json to_json(const ExtrapolationStatus& s) {
  return json{{"metric", s.metric},
              {"threshold", s.threshold},
              {"extrapolated", s.extrapolated},
              {"kind", to_string(s.kind)}};
}

// ---------------------------------------------------------------- bound model

ExtrapolationModel::ExtrapolationModel(FactorSpace space, LeverageModel model)
    : space_(std::move(space)), model_(std::move(model)) {
  if (std::get<LeverageModel>(model_).p() != space_.encoded_dim() + 1)
    throw std::invalid_argument("leverage model does not match the factor space");
}

ExtrapolationModel::ExtrapolationModel(FactorSpace space, RegT2Model model)
    : space_(std::move(space)), model_(std::move(model)) {
  if (static_cast<std::size_t>(std::get<RegT2Model>(model_).cov().dim()) != space_.encoded_dim())
    throw std::invalid_argument("T^2 model does not match the factor space");
}

MetricKind ExtrapolationModel::kind() const {
  return std::holds_alternative<LeverageModel>(model_) ? MetricKind::Leverage : MetricKind::RegT2;
}

double ExtrapolationModel::threshold() const {
  if (auto* lm = leverage_model()) return lm->threshold();
  return regt2_model()->ucl();
}

Eigen::VectorXd ExtrapolationModel::metric_vector(const Settings& s) const {
  const Eigen::VectorXd x = encode_point(space_, s);
  if (auto* lm = leverage_model()) {
    if (x.hasNaN()) throw std::invalid_argument("leverage is undefined for settings with missing values");
    Eigen::VectorXd v(x.size() + 1);
    v[0] = 1.0;
    v.tail(x.size()) = x;
    (void)lm;
    return v;
  }
  return regt2_model()->deviation(x);
}

double ExtrapolationModel::metric(const Settings& s) const {
  const Eigen::VectorXd v = metric_vector(s);
  if (auto* lm = leverage_model()) return lm->leverage(v);
  return regt2_model()->cov().quad_form(v);
}

ExtrapolationStatus ExtrapolationModel::status(const Settings& s) const {
  return classify(metric(s), threshold(), kind());
}

namespace {

// Encoded coordinate of a continuous factor.
Eigen::Index encoded_position(const FactorSpace& space, std::size_t factor) {
  Eigen::Index k = 0;
  for (std::size_t f = 0; f < factor; ++f) k += space[f].is_categorical() ? space[f].level_count() - 1 : 1;
  return k;
}

}  // namespace

ExtrapolationModel::Quadratic ExtrapolationModel::trace_quadratic(const Settings& s, std::size_t factor) const {
  if (factor >= space_.size() || !space_[factor].is_continuous())
    throw std::invalid_argument("trace_quadratic needs a continuous factor");
  Settings base = s;
  Eigen::Index j = encoded_position(space_, factor);
  if (auto* rt = regt2_model()) {
    if (std::isnan(base[factor])) base[factor] = rt->cov().mean()[j];
  } else {
    ++j;  // intercept slot
  }
  Quadratic q;
  q.origin = base[factor];
  const Eigen::VectorXd v = metric_vector(base);
  if (auto* lm = leverage_model()) {
    const Eigen::VectorXd mv = lm->xtx_inv() * v;
    q.a = lm->xtx_inv()(j, j);
    q.b = 2.0 * mv[j];
    q.c = v.dot(mv);
  } else {
    const auto& cov = regt2_model()->cov();
    const Eigen::VectorXd mv = cov.solve(v);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(v.size());
    e[j] = 1.0;
    q.a = cov.solve(e)[j];
    q.b = 2.0 * mv[j];
    q.c = cov.quad_form(v);
  }
  return q;
}

json ExtrapolationModel::to_json() const {
  if (auto* lm = leverage_model()) {
    json rule;
    if (auto* r = std::get_if<MaxLeverage>(&lm->rule()))
      rule = {{"type", "max"}, {"k", r->k}};
    else
      rule = {{"type", "average"}, {"l", std::get<AverageLeverage>(lm->rule()).l}};
    return json{{"kind", "leverage"},
                {"xtx_inv", matrix_to_json(lm->xtx_inv())},
                {"max_h", lm->max_h()},
                {"n", lm->n()},
                {"rule", rule}};
  }
  const auto& rt = *regt2_model();
  return json{{"kind", "regt2"},
              {"mean", vector_to_json(rt.cov().mean())},
              {"sample_cov", matrix_to_json(rt.cov().sample_cov())},
              {"lambda", rt.cov().lambda()},
              {"t2_mean", rt.t2_mean()},
              {"t2_sd", rt.t2_sd()},
              {"sigma_multiplier", rt.sigma_multiplier()}};
}

ExtrapolationModel ExtrapolationModel::from_json(const FactorSpace& space, const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "leverage") {
    LeverageRule rule = MaxLeverage{};
    const auto& r = j.at("rule");
    if (r.at("type") == "max")
      rule = MaxLeverage{r.at("k").get<double>()};
    else if (r.at("type") == "average")
      rule = AverageLeverage{r.at("l").get<double>()};
    else
      throw std::invalid_argument("unknown leverage rule");
    return ExtrapolationModel(space, LeverageModel(matrix_from_json(j.at("xtx_inv")), j.at("max_h").get<double>(),
                                                   j.at("n").get<std::size_t>(), rule));
  }
  if (kind == "regt2") {
    ShrunkCovariance cov(vector_from_json(j.at("mean")), matrix_from_json(j.at("sample_cov")),
                         j.at("lambda").get<double>(), Eigen::MatrixXi());
    return ExtrapolationModel(space, RegT2Model(std::move(cov), j.at("t2_mean").get<double>(),
                                                j.at("t2_sd").get<double>(),
                                                j.at("sigma_multiplier").get<double>()));
  }
  throw std::invalid_argument("unknown extrapolation model kind '" + kind + "'");
}

// ---------------------------------------------------------------- feasibility

FeasibleSet feasible_interval(const ExtrapolationModel& model, const Settings& s, std::size_t factor) {
  const auto& space = model.space();
  if (factor >= space.size()) throw std::out_of_range("factor index out of range");
  const double thr = model.threshold();
  FeasibleSet out;
  const auto& def = space[factor];
  if (def.is_discrete()) {
    out.continuous = false;
    Settings probe = s;
    for (std::size_t l = 0; l < def.level_count(); ++l) {
      probe[factor] = static_cast<double>(l);
      if (model.metric(probe) <= thr) out.levels.push_back(l);
    }
    return out;
  }

  const auto& box = std::get<Continuous>(def.kind);
  const auto q = model.trace_quadratic(s, factor);
  const double lo = box.low - q.origin;
  const double hi = box.high - q.origin;
  const double c = q.c - thr;
  double r1 = -INFINITY;
  double r2 = INFINITY;
  if (q.a > 0.0) {
    const double disc = q.b * q.b - 4.0 * q.a * c;
    if (disc < 0.0) return out;  // empty
    const double sq = std::sqrt(disc);
    const double w = -0.5 * (q.b + (q.b >= 0.0 ? sq : -sq));
    double x1 = w / q.a;
    double x2 = w != 0.0 ? c / w : x1;
    if (x1 > x2) std::swap(x1, x2);
    r1 = x1;
    r2 = x2;
  } else if (q.b > 0.0) {
    r2 = -c / q.b;
  } else if (q.b < 0.0) {
    r1 = -c / q.b;
  } else if (c > 0.0) {
    return out;
  }
  const double a = std::max(r1, lo);
  const double b = std::min(r2, hi);
  if (a > b) return out;
  // report box bounds exactly rather than after a round trip through origin
  out.interval = {r1 <= lo ? box.low : a + q.origin, r2 >= hi ? box.high : b + q.origin};
  return out;
}

double f_limit(std::size_t p, std::size_t n, double alpha) {
  if (n <= p) throw std::invalid_argument("F limit requires n > p");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double pd = static_cast<double>(p);
  const double nd = static_cast<double>(n);
  boost::math::fisher_f dist(pd, nd - pd);
  const double f = boost::math::quantile(dist, 1.0 - alpha);
  return (nd + 1.0) * (nd - 1.0) * pd / (nd * (nd - pd)) * f;
}

}  // namespace exprof
