#include "exprof/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>

#include "exprof/extrapolation.hpp"

namespace exprof {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) { return mix(mix(mix(seed) ^ a) ^ b); }

std::string variant_name(MetricVariant v) { return v == MetricVariant::Regularized ? "regularized" : "pseudo_inverse"; }
std::string noise_name(NoiseModel m) { return m == NoiseModel::Matrix ? "matrix" : "broadcast"; }

}  // namespace

void SimulationScenario::validate() const {
  if (p < 2) throw std::invalid_argument("scenario needs p >= 2");
  if (n < 3) throw std::invalid_argument("scenario needs n >= 3");
  if (r > p) throw std::invalid_argument("rank r must not exceed p");
  if (r > n) throw std::invalid_argument("rank r must not exceed n");
  if (p_cat > p) throw std::invalid_argument("p_cat must not exceed p");
  if (p_cat > 0 && p - p_cat < 2) throw std::invalid_argument("need at least two continuous columns for the grid");
  if (replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (n_grid < 2) throw std::invalid_argument("need at least two grid points");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
}

json to_json(const SimulationScenario& s) {
  return json{{"n", s.n},
              {"p", s.p},
              {"r", s.r},
              {"p_cat", s.p_cat},
              {"n_grid", s.n_grid},
              {"replicates", s.replicates},
              {"alpha", s.alpha},
              {"seed", s.seed},
              {"variant", variant_name(s.variant)},
              {"noise", noise_name(s.noise)},
              {"n_test", s.n_test},
              {"sigma_multiplier", s.sigma_multiplier},
              {"threads", s.threads}};
}

SimulationScenario scenario_from_json(const json& j) {
  SimulationScenario s;
  s.n = j.value("n", s.n);
  s.p = j.value("p", s.p);
  s.r = j.value("r", s.r);
  s.p_cat = j.value("p_cat", s.p_cat);
  s.n_grid = j.value("n_grid", s.n_grid);
  s.replicates = j.value("replicates", s.replicates);
  s.alpha = j.value("alpha", s.alpha);
  s.seed = j.value("seed", s.seed);
  s.n_test = j.value("n_test", s.n_test);
  s.sigma_multiplier = j.value("sigma_multiplier", s.sigma_multiplier);
  s.threads = j.value("threads", s.threads);
  const auto variant = j.value("variant", std::string("regularized"));
  if (variant == "regularized")
    s.variant = MetricVariant::Regularized;
  else if (variant == "pseudo_inverse")
    s.variant = MetricVariant::PseudoInverse;
  else
    throw std::invalid_argument("unknown metric variant '" + variant + "'");
  const auto noise = j.value("noise", std::string("matrix"));
  if (noise == "matrix")
    s.noise = NoiseModel::Matrix;
  else if (noise == "broadcast")
    s.noise = NoiseModel::Broadcast;
  else
    throw std::invalid_argument("unknown noise model '" + noise + "'");
  s.validate();
  return s;
}

// ---------------------------------------------------------------- data

Eigen::MatrixXd draw_rows(const Eigen::MatrixXd& loadings, std::size_t n, std::uint64_t seed, NoiseModel noise) {
  const Eigen::Index r = loadings.rows();
  const Eigen::Index p = loadings.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
  Eigen::RowVectorXd u(r);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < r; ++k) u[k] = normal(rng);
    x.row(i) = r > 0 ? (u * loadings).eval() : Eigen::RowVectorXd::Zero(p);
    if (noise == NoiseModel::Matrix) {
      for (Eigen::Index j = 0; j < p; ++j) x(i, j) += normal(rng);
    } else {
      x.row(i).array() += normal(rng);
    }
  }
  return x;
}

FactorSample simulate_factor_matrix(std::size_t n, std::size_t p, std::size_t r, std::uint64_t seed,
                                    NoiseModel noise) {
  if (p == 0 || n == 0) throw std::invalid_argument("empty factor matrix requested");
  if (r > std::min(n, p)) throw std::invalid_argument("rank must not exceed min(n, p)");
  std::mt19937_64 rng(derive(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  FactorSample s;
  s.loadings.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < s.loadings.rows(); ++k)
    for (Eigen::Index j = 0; j < s.loadings.cols(); ++j) s.loadings(k, j) = normal(rng);
  s.x = draw_rows(s.loadings, n, derive(seed, 2), noise);
  s.true_sigma = s.loadings.transpose() * s.loadings;
  if (noise == NoiseModel::Matrix)
    s.true_sigma.diagonal().array() += 1.0;
  else
    s.true_sigma.array() += 1.0;
  return s;
}

double true_t2(const Eigen::MatrixXd& true_sigma, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::LLT<Eigen::MatrixXd> llt(true_sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("true covariance is not positive definite");
  return llt.matrixL().solve(x).squaredNorm();
}

bool oracle_label(double t2, std::size_t p, double alpha) {
  boost::math::chi_squared chi(static_cast<double>(p));
  return boost::math::cdf(boost::math::complement(chi, std::max(0.0, t2))) < alpha;
}

ExtrapolationGrid extrapolation_grid(const Eigen::MatrixXd& x, const Eigen::MatrixXd& true_sigma, std::size_t n_grid,
                                     double alpha, const std::vector<std::size_t>& candidates) {
  const Eigen::Index p = x.cols();
  if (p < 2) throw std::invalid_argument("grid needs at least two columns");
  std::vector<std::size_t> cols = candidates;
  if (cols.empty())
    for (Eigen::Index j = 0; j < p; ++j) cols.push_back(static_cast<std::size_t>(j));
  if (cols.size() < 2) throw std::invalid_argument("grid needs two candidate columns");

  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd dev = x.rowwise() - mean.transpose();
  const Eigen::VectorXd sd = dev.colwise().norm().transpose();
  ExtrapolationGrid g;
  double best = -1.0;
  for (std::size_t ia = 0; ia < cols.size(); ++ia) {
    for (std::size_t ib = ia + 1; ib < cols.size(); ++ib) {
      const auto a = static_cast<Eigen::Index>(cols[ia]);
      const auto b = static_cast<Eigen::Index>(cols[ib]);
      const double corr = dev.col(a).dot(dev.col(b)) / (sd[a] * sd[b]);
      if (std::abs(corr) > best) {
        best = std::abs(corr);
        g.col_a = cols[ia];
        g.col_b = cols[ib];
        g.correlation = corr;
      }
    }
  }
  const auto a = static_cast<Eigen::Index>(g.col_a);
  const auto b = static_cast<Eigen::Index>(g.col_b);
  const double corner_a = x.col(a).maxCoeff();
  const double corner_b = g.correlation > 0.0 ? x.col(b).minCoeff() : x.col(b).maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(true_sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("true covariance is not positive definite");
  for (std::size_t k = 0; k < n_grid; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_grid - 1);
    GridPoint pt;
    pt.x = mean;
    pt.x[a] = mean[a] + t * (corner_a - mean[a]);
    pt.x[b] = mean[b] + t * (corner_b - mean[b]);
    pt.t2_true = llt.matrixL().solve(pt.x).squaredNorm();
    pt.extrapolated = oracle_label(pt.t2_true, static_cast<std::size_t>(p), alpha);
    g.points.push_back(std::move(pt));
  }
  return g;
}

std::size_t level_of(double value, const std::vector<double>& cuts) {
  return static_cast<std::size_t>(std::count_if(cuts.begin(), cuts.end(), [&](double c) { return value > c; }));
}

Settings Discretization::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Settings s{std::vector<double>(x.data(), x.data() + x.size())};
  for (std::size_t k = 0; k < columns.size(); ++k)
    s[columns[k]] = static_cast<double>(level_of(x[static_cast<Eigen::Index>(columns[k])], cuts[k]));
  return s;
}

Discretization discretize(const Eigen::MatrixXd& x, std::size_t p_cat, std::uint64_t seed) {
  const auto p = static_cast<std::size_t>(x.cols());
  if (p_cat > p) throw std::invalid_argument("p_cat exceeds the number of columns");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(p);
  for (std::size_t j = 0; j < p; ++j) order[j] = j;
  for (std::size_t i = 0; i < p_cat; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, p - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  Discretization d;
  d.columns.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p_cat));
  std::sort(d.columns.begin(), d.columns.end());

  std::vector<Column> columns;
  std::vector<FactorDef> defs;
  std::uniform_int_distribution<int> levels_dist(2, 4);
  std::vector<int> n_levels;
  for (std::size_t k = 0; k < d.columns.size(); ++k) n_levels.push_back(levels_dist(rng));
  for (std::size_t j = 0; j < p; ++j) {
    const std::string name = "x" + std::to_string(j + 1);
    std::vector<double> col(x.col(static_cast<Eigen::Index>(j)).data(),
                            x.col(static_cast<Eigen::Index>(j)).data() + x.rows());
    auto it = std::find(d.columns.begin(), d.columns.end(), j);
    if (it == d.columns.end()) {
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      defs.push_back({name, Continuous{*lo, *hi}});
      columns.push_back(Column::numeric(name, std::move(col), std::vector<bool>(col.size(), false)));
      continue;
    }
    const int k = n_levels[static_cast<std::size_t>(it - d.columns.begin())];
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (int q = 1; q < k; ++q) {
      // linear-interpolated empirical quantile
      const double pos = static_cast<double>(q) / k * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
      cuts.push_back(sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
    }
    Column c;
    c.name = name;
    c.type = ColumnType::Text;
    for (int l = 0; l < k; ++l) c.levels.push_back("L" + std::to_string(l + 1));
    for (double v : col) {
      c.codes.push_back(static_cast<int>(level_of(v, cuts)));
      c.missing.push_back(false);
    }
    defs.push_back({name, Categorical{c.levels}});
    columns.push_back(std::move(c));
    d.cuts.push_back(std::move(cuts));
  }
  d.data = Dataset(std::move(columns));
  d.space = FactorSpace(std::move(defs));
  return d;
}

// ---------------------------------------------------------------- metrics

PseudoInverseT2 fit_pseudo_inverse_t2(const Eigen::MatrixXd& x) {
  PseudoInverseT2 m;
  const double n = static_cast<double>(x.rows());
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd dev = x.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov = dev.transpose() * dev / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd vals = eig.eigenvalues();
  const double tol = 1e-10 * std::max(vals.maxCoeff(), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
  for (Eigen::Index k = 0; k < vals.size(); ++k) {
    if (vals[k] > tol) {
      inv[k] = 1.0 / vals[k];
      ++m.rank;
    }
  }
  m.pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  m.t2_train.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) m.t2_train[i] = dev.row(i).dot(m.pinv * dev.row(i).transpose());
  return m;
}

double PseudoInverseT2::t2(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd d = x - mean;
  return d.dot(pinv * d);
}

// ---------------------------------------------------------------- study

RateCI normal_ci(const std::vector<double>& values) {
  RateCI ci;
  ci.count = values.size();
  if (values.empty()) {
    ci.rate = ci.low = ci.high = std::nan("");
    return ci;
  }
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  const double half = 1.959963984540054 * sd / std::sqrt(static_cast<double>(values.size()));
  ci.rate = mean;
  ci.low = std::clamp(mean - half, 0.0, 1.0);
  ci.high = std::clamp(mean + half, 0.0, 1.0);
  return ci;
}

ReplicateRecord run_replicate(const SimulationScenario& sc, std::size_t replicate) {
  const std::uint64_t seed = derive(sc.seed, 100, replicate);
  const FactorSample sample = simulate_factor_matrix(sc.n, sc.p, sc.r, seed, sc.noise);
  const std::size_t n_test = sc.n_test == 0 ? sc.n : sc.n_test;
  const Eigen::MatrixXd test = draw_rows(sample.loadings, n_test, derive(seed, 3), sc.noise);

  std::optional<Discretization> disc;
  std::vector<std::size_t> candidates;
  EncodedMatrix enc;
  if (sc.p_cat > 0) {
    disc = discretize(sample.x, sc.p_cat, derive(seed, 4));
    enc = encode(disc->data, disc->space);
    for (std::size_t j = 0; j < sc.p; ++j)
      if (!std::binary_search(disc->columns.begin(), disc->columns.end(), j)) candidates.push_back(j);
  } else {
    enc = EncodedMatrix::from_complete(sample.x);
  }
  auto to_vector = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return disc ? encode_point(disc->space, disc->apply(x)) : x;
  };

  ReplicateRecord rec;
  rec.replicate = replicate;
  std::function<double(const Eigen::VectorXd&)> metric;
  std::optional<RegT2Model> reg;
  std::optional<PseudoInverseT2> pinv;
  Eigen::VectorXd t2_train;
  if (sc.variant == MetricVariant::Regularized) {
    reg = fit_regt2_model(enc, RegT2Options{{}, sc.sigma_multiplier});
    rec.ucl = reg->ucl();
    t2_train = reg->t2_train();
    metric = [&](const Eigen::VectorXd& v) { return reg->t2(v); };
  } else {
    pinv = fit_pseudo_inverse_t2(enc.values);
    rec.ucl = control_limit(pinv->t2_train, sc.sigma_multiplier);
    t2_train = pinv->t2_train;
    metric = [&](const Eigen::VectorXd& v) { return pinv->t2(v); };
  }
  rec.train_t2_mean = t2_train.mean();
  rec.train_t2_sd = std::sqrt((t2_train.array() - rec.train_t2_mean).square().sum() /
                              static_cast<double>(t2_train.size() - 1));

  const auto grid = extrapolation_grid(sample.x, sample.true_sigma, sc.n_grid, sc.alpha, candidates);
  for (const auto& pt : grid.points) {
    const double m = metric(to_vector(pt.x));
    rec.grid_t2_true.push_back(pt.t2_true);
    rec.grid_label.push_back(pt.extrapolated);
    rec.grid_metric.push_back(m);
    rec.grid_flagged.push_back(m > rec.ucl);
    if (!pt.extrapolated) {
      ++rec.grid_negatives;
      if (m > rec.ucl) ++rec.grid_false_positives;
    }
  }
  rec.negatives = rec.grid_negatives;
  rec.false_positives = rec.grid_false_positives;
  Eigen::LLT<Eigen::MatrixXd> truth(sample.true_sigma);
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const Eigen::VectorXd x = test.row(i).transpose();
    if (oracle_label(truth.matrixL().solve(x).squaredNorm(), sc.p, sc.alpha)) continue;
    ++rec.negatives;
    if (metric(to_vector(x)) > rec.ucl) ++rec.false_positives;
  }
  rec.fpr = rec.negatives ? static_cast<double>(rec.false_positives) / static_cast<double>(rec.negatives) : 0.0;
  return rec;
}

StudyResult run_study(const SimulationScenario& sc) {
  sc.validate();
  StudyResult out;
  out.scenario = sc;
  out.replicates.resize(sc.replicates);
  const std::size_t threads =
      sc.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : std::max<std::size_t>(1, sc.threads);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < sc.replicates; k = next++) {
      try {
        out.replicates[k] = run_replicate(sc, k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t k = 0; k < sc.n_grid; ++k) {
    std::vector<double> hits;
    for (const auto& rec : out.replicates)
      if (rec.grid_label[k]) hits.push_back(rec.grid_flagged[k] ? 1.0 : 0.0);
    out.tpr.push_back(normal_ci(hits));
  }
  std::vector<double> fprs, grid, fresh;
  for (const auto& rec : out.replicates) {
    fprs.push_back(rec.fpr);
    if (rec.grid_negatives) grid.push_back(double(rec.grid_false_positives) / double(rec.grid_negatives));
    const std::size_t fresh_neg = rec.negatives - rec.grid_negatives;
    if (fresh_neg) fresh.push_back(double(rec.false_positives - rec.grid_false_positives) / double(fresh_neg));
  }
  out.fpr = normal_ci(fprs);
  out.fpr_grid = normal_ci(grid);
  out.fpr_fresh = normal_ci(fresh);
  return out;
}

json StudyResult::summary_json() const {
  auto ci_json = [](const RateCI& c) {
    return json{{"rate", std::isnan(c.rate) ? json(nullptr) : json(c.rate)},
                {"low", std::isnan(c.low) ? json(nullptr) : json(c.low)},
                {"high", std::isnan(c.high) ? json(nullptr) : json(c.high)},
                {"replicates", c.count}};
  };
  json tpr_json = json::array();
  for (std::size_t k = 0; k < tpr.size(); ++k) {
    json e = ci_json(tpr[k]);
    e["rank"] = k + 1;
    tpr_json.push_back(e);
  }
  double spread = 0.0;
  double t2_mean = 0.0;
  for (const auto& r : replicates) {
    spread = std::max(spread, r.train_t2_sd);
    t2_mean += r.train_t2_mean;
  }
  t2_mean /= static_cast<double>(replicates.size());
  return json{{"v", 1},
              {"scenario", to_json(scenario)},
              {"tpr", tpr_json},
              {"fpr", ci_json(fpr)},
              {"fpr_grid", ci_json(fpr_grid)},
              {"fpr_fresh", ci_json(fpr_fresh)},
              {"train_t2_mean", t2_mean},
              {"train_t2_max_sd", spread}};
}

std::string StudyResult::records_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "replicate,rank,t2_true,label,metric,ucl,flagged\n";
  for (const auto& r : replicates)
    for (std::size_t k = 0; k < r.grid_label.size(); ++k)
      out << r.replicate << ',' << k + 1 << ',' << r.grid_t2_true[k] << ',' << (r.grid_label[k] ? 1 : 0) << ','
          << r.grid_metric[k] << ',' << r.ucl << ',' << (r.grid_flagged[k] ? 1 : 0) << '\n';
  return out.str();
}

std::string StudyResult::tpr_svg() const {
  const double w = 480, h = 300, m = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">grid rank</text>\n";
  svg << "<text x=\"12\" y=\"" << h / 2 << "\" transform=\"rotate(-90 12 " << h / 2
      << ")\" text-anchor=\"middle\">TPR</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  const double n = static_cast<double>(std::max<std::size_t>(tpr.size(), 2) - 1);
  for (std::size_t k = 0; k < tpr.size(); ++k) {
    if (tpr[k].count == 0) continue;
    const double x = m + (w - 2 * m) * static_cast<double>(k) / n;
    const double y = (h - m) - (h - 2 * m) * tpr[k].rate;
    svg << x << ',' << y << ' ';
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

}  // namespace exprof
