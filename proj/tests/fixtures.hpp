#pragma once

#include <random>
#include <string>

#include "exprof/dataset.hpp"
#include "oracles.hpp"

namespace fixtures {

/// Four correlated continuous factors, a three-level categorical factor
/// and two responses.
inline exprof::Dataset mixed_dataset(int n, std::uint64_t seed) {
  using exprof::Column;
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd z = oracle::random_correlated(n, 4, rng);
  std::normal_distribution<double> noise(0, 0.3);
  std::vector<Column> cols;
  for (int j = 0; j < 4; ++j)
    cols.push_back(Column::numeric("x" + std::to_string(j + 1),
                                   std::vector<double>(z.col(j).data(), z.col(j).data() + n)));
  std::vector<std::optional<std::string>> g;
  std::vector<double> y, y2;
  for (int i = 0; i < n; ++i) {
    const int level = z(i, 0) + 0.5 * z(i, 1) > 0.3 ? 2 : (i % 3 ? 1 : 0);
    g.push_back(std::string(1, char('a' + level)));
    y.push_back(z(i, 0) - z(i, 2) + 0.5 * level + noise(rng));
    y2.push_back(0.5 * z(i, 1) + z(i, 3) + noise(rng));
  }
  cols.push_back(Column::text("g", g));
  cols.push_back(Column::numeric("y", y));
  cols.push_back(Column::numeric("y2", y2));
  return exprof::Dataset(cols);
}

inline exprof::FactorSpace factors_of(const exprof::Dataset& d) {
  return exprof::infer_factor_space(d, {{"y", "y2"}, {}});
}

}  // namespace fixtures
