#include <cmath>
#include <random>
#include <stdexcept>

#include "exprof/json_eigen.hpp"
#include "exprof/models.hpp"

namespace exprof {

using nlohmann::json;

// ---------------------------------------------------------------- TanhNet

TanhNet::TanhNet(Eigen::Index inputs, Eigen::Index hidden)
    : weights_(Eigen::MatrixXd::Zero(hidden, inputs)),
      bias_(Eigen::VectorXd::Zero(hidden)),
      output_(Eigen::VectorXd::Zero(hidden)) {}

double TanhNet::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd h = (weights_ * x + bias_).array().tanh().matrix();
  return output_.dot(h) + output_bias_;
}

Eigen::MatrixXd TanhNet::activations(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x * weights_.transpose();
  a.rowwise() += bias_.transpose();
  return a.array().tanh().matrix();
}

Eigen::VectorXd TanhNet::forward_rows(const Eigen::MatrixXd& x) const {
  return (activations(x) * output_).array() + output_bias_;
}

Eigen::VectorXd TanhNet::parameters() const {
  const Eigen::Index h = hidden(), d = inputs();
  Eigen::VectorXd theta(h * d + 2 * h + 1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < d; ++j) theta[k++] = weights_(i, j);
  theta.segment(k, h) = bias_;
  k += h;
  theta.segment(k, h) = output_;
  k += h;
  theta[k] = output_bias_;
  return theta;
}

void TanhNet::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Eigen::Index h = hidden(), d = inputs();
  if (theta.size() != h * d + 2 * h + 1) throw std::invalid_argument("parameter vector has the wrong size");
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < d; ++j) weights_(i, j) = theta[k++];
  bias_ = theta.segment(k, h);
  k += h;
  output_ = theta.segment(k, h);
  k += h;
  output_bias_ = theta[k];
}

double TanhNet::loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double decay) const {
  const double n = static_cast<double>(x.rows());
  return (forward_rows(x) - y).squaredNorm() / (2.0 * n) + 0.5 * decay * weights_.squaredNorm();
}

Eigen::VectorXd TanhNet::gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double decay) const {
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd h = activations(x);
  const Eigen::VectorXd e = (h * output_).array() + output_bias_ - y.array();
  // dL/da for every row and hidden unit
  const Eigen::MatrixXd g =
      ((e * output_.transpose()).array() * (1.0 - h.array().square())).matrix() / n;
  TanhNet grad(inputs(), hidden());
  grad.weights_ = g.transpose() * x + decay * weights_;
  grad.bias_ = g.colwise().sum().transpose();
  grad.output_ = h.transpose() * e / n;
  grad.output_bias_ = e.sum() / n;
  return grad.parameters();
}

json TanhNet::to_json() const {
  return json{{"W", matrix_to_json(weights_)},
              {"b", vector_to_json(bias_)},
              {"v", vector_to_json(output_)},
              {"c", output_bias_}};
}

TanhNet TanhNet::from_json(const json& j) {
  TanhNet net;
  net.weights_ = matrix_from_json(j.at("W"));
  net.bias_ = vector_from_json(j.at("b"));
  net.output_ = vector_from_json(j.at("v"));
  net.output_bias_ = j.at("c").get<double>();
  if (net.bias_.size() != net.weights_.rows() || net.output_.size() != net.weights_.rows())
    throw std::invalid_argument("inconsistent network shapes");
  return net;
}

// ---------------------------------------------------------------- boosting

Eigen::VectorXd BoostedTanhNet::input(const Settings& s) const {
  if (s.size() != space_.size()) throw std::invalid_argument("settings size does not match factor space");
  Settings full{std::vector<double>(input_space_.size(), 0.0)};
  for (std::size_t f = 0; f < space_.size(); ++f) full[f] = std::isnan(s[f]) ? fill_[f] : s[f];
  for (std::size_t k = 0; k < indicators_.size(); ++k)
    full[space_.size() + k] = std::isnan(s[indicators_[k]]) ? 1.0 : 0.0;
  const Eigen::VectorXd x = encode_point(input_space_, full);
  return ((x - input_mean_).array() / input_scale_.array()).matrix();
}

std::vector<double> BoostedTanhNet::stage_outputs(const Settings& s) const {
  const Eigen::VectorXd x = input(s);
  std::vector<double> out;
  out.reserve(stages_.size());
  for (const auto& st : stages_) out.push_back(st.net.forward(x));
  return out;
}

std::vector<double> BoostedTanhNet::predict(const Settings& s) const {
  double y = base_;
  for (double f : stage_outputs(s)) y += learning_rate_ * f;
  return {y};
}

std::vector<double> BoostedTanhNet::loss_history() const {
  std::vector<double> h{base_loss_};
  for (const auto& st : stages_) h.push_back(st.train_loss);
  return h;
}

json BoostedTanhNet::to_json() const {
  json stages = json::array();
  for (const auto& st : stages_) stages.push_back({{"net", st.net.to_json()}, {"train_loss", st.train_loss}});
  return json{{"type", "boosted_tanh"},
              {"space", exprof::to_json(space_)},
              {"response", responses_.front()},
              {"input_space", exprof::to_json(input_space_)},
              {"fill", fill_.values},
              {"indicators", indicators_},
              {"input_mean", vector_to_json(input_mean_)},
              {"input_scale", vector_to_json(input_scale_)},
              {"base", base_},
              {"base_loss", base_loss_},
              {"learning_rate", learning_rate_},
              {"train_r2", train_r2_},
              {"stages", stages}};
}

std::shared_ptr<BoostedTanhNet> BoostedTanhNet::from_json(const json& j) {
  auto m = std::make_shared<BoostedTanhNet>();
  m->space_ = factor_space_from_json(j.at("space"));
  m->responses_ = {j.at("response").get<std::string>()};
  m->input_space_ = factor_space_from_json(j.at("input_space"));
  m->fill_ = Settings{j.at("fill").get<std::vector<double>>()};
  m->indicators_ = j.at("indicators").get<std::vector<std::size_t>>();
  m->input_mean_ = vector_from_json(j.at("input_mean"));
  m->input_scale_ = vector_from_json(j.at("input_scale"));
  m->base_ = j.at("base").get<double>();
  m->base_loss_ = j.at("base_loss").get<double>();
  m->learning_rate_ = j.at("learning_rate").get<double>();
  m->train_r2_ = j.at("train_r2").get<double>();
  for (const auto& st : j.at("stages")) m->stages_.push_back({TanhNet::from_json(st.at("net")), st.at("train_loss")});
  return m;
}

namespace {

// Deterministic per-stage stream derived from the fit seed.
std::uint64_t stage_seed(std::uint64_t seed, std::size_t stage) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::shared_ptr<BoostedTanhNet> fit_boosted_tanh(const Dataset& train, const FactorSpace& space,
                                                 const std::string& response, const BoostConfig& config) {
  if (config.neurons < 1) throw std::invalid_argument("need at least one hidden neuron");
  const auto imputed = apply_missing_policy(train, space, MissingPolicy{config.informative_missing});
  const auto y_all = numeric_values(train.column(response));
  const auto settings = dataset_settings(imputed.data, imputed.space);

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    if (std::isnan(y_all[i])) continue;
    const auto& s = settings[i].values;
    if (std::any_of(s.begin(), s.end(), [](double v) { return std::isnan(v); })) continue;
    rows.push_back(encode_point(imputed.space, settings[i]));
    ys.push_back(y_all[i]);
  }
  if (rows.size() < 20) throw std::invalid_argument("boosted network needs at least 20 usable rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = rows.front().size();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    y[i] = ys[static_cast<std::size_t>(i)];
  }

  auto model = std::make_shared<BoostedTanhNet>();
  model->space_ = space;
  model->responses_ = {response};
  model->input_space_ = imputed.space;
  model->fill_ = imputed.fill;
  model->indicators_ = imputed.indicators;
  model->learning_rate_ = config.learning_rate;
  model->input_mean_ = x.colwise().mean().transpose();
  model->input_scale_.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt((x.col(j).array() - model->input_mean_[j]).square().sum() / double(n));
    model->input_scale_[j] = sd > 0.0 ? sd : 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - model->input_mean_.transpose()).array().rowwise() /
                            model->input_scale_.transpose().array();

  model->base_ = y.mean();
  Eigen::VectorXd residual = y.array() - model->base_;
  model->base_loss_ = residual.squaredNorm() / double(n);
  const double y_scale = std::sqrt(model->base_loss_) > 0.0 ? std::sqrt(model->base_loss_) : 1.0;

  for (std::size_t k = 0; k < config.stages; ++k) {
    std::mt19937_64 rng(stage_seed(config.seed, k));
    std::normal_distribution<double> normal(0.0, 1.0);
    TanhNet net(d, config.neurons);
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < net.hidden(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) net.weights()(i, j) = w_scale * normal(rng);
      net.bias()[i] = 0.5 * normal(rng);
      net.output()[i] = 0.5 * normal(rng);
    }

    const Eigen::VectorXd target = residual / y_scale;
    Eigen::VectorXd theta = net.parameters();
    for (std::size_t it = 0; it < config.iterations; ++it) {
      theta -= config.step * net.gradient(z, target, config.weight_decay);
      net.set_parameters(theta);
    }
    // Refit the output layer exactly; with the intercept in the span this
    // guarantees the stage never increases the training loss.
    const Eigen::MatrixXd h = net.activations(z);
    Eigen::MatrixXd design(n, h.cols() + 1);
    design << h, Eigen::VectorXd::Ones(n);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::VectorXd coef = qr.solve(residual);
    if (coef.allFinite()) {
      net.output() = coef.head(h.cols());
      net.output_bias() = coef[h.cols()];
    } else {
      net.output() *= y_scale;
      net.output_bias() *= y_scale;
    }

    residual -= config.learning_rate * net.forward_rows(z);
    const double loss = residual.squaredNorm() / double(n);
    if (!std::isfinite(loss))
      throw std::runtime_error("boosting stage " + std::to_string(k + 1) + " produced a non-finite loss");
    model->stages_.push_back({std::move(net), loss});
  }
  const double ss_tot = (y.array() - model->base_).square().sum();
  model->train_r2_ = ss_tot > 0.0 ? 1.0 - residual.squaredNorm() / ss_tot : 1.0;
  return model;
}

}  // namespace exprof
