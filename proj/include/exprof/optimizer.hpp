#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "exprof/factor_space.hpp"
#include "json.hpp"

namespace exprof {

struct GAConfig {
  std::size_t population = 200;
  std::size_t generations = 300;
  double crossover_rate = 0.9;
  /// Per-gene probability; defaults to 1 / number of factors.
  std::optional<double> mutation_rate;
  std::size_t tournament = 3;
  std::size_t elitism = 2;
  std::uint64_t seed = 1;
  /// Stop after this many generations without a better best.
  std::size_t stall_limit = 50;
  /// Fitness evaluation workers; 0 = hardware concurrency.
  std::size_t threads = 1;

  void validate() const;
};

nlohmann::json to_json(const GAConfig& c);
/// Applies the fields present in `j` on top of `base`.
GAConfig ga_config_from_json(const nlohmann::json& j, GAConfig base = {});

struct ConstraintValue {
  double metric = 0.0;
  double threshold = 0.0;
};

using Objective = std::function<double(const Settings&)>;
using Constraint = std::function<ConstraintValue(const Settings&)>;

struct OptimumReport {
  Settings best;
  double objective = 0.0;
  std::optional<double> metric;
  std::optional<double> threshold;
  bool feasible = true;
  std::size_t generations = 0;
  bool stalled = false;
  /// Best objective after initialization and after every generation.
  std::vector<double> history;
};

nlohmann::json to_json(const FactorSpace& space, const OptimumReport& r);

/// Maximizes `objective` over the box/level space. With a constraint, the
/// feasibility rule applies: feasible beats infeasible, smaller violation
/// beats larger, then higher objective wins. `seeds` (e.g. training rows)
/// enter the initial population. When nothing feasible is ever found the
/// least violating point is returned with feasible = false.
OptimumReport optimize(const Objective& objective, const Constraint& constraint, const FactorSpace& space,
                       const GAConfig& config, std::span<const Settings> seeds = {});

namespace ga {

struct Individual {
  Settings genes;
  double objective = 0.0;
  double violation = 0.0;  ///< metric - threshold; <= 0 when feasible
  bool feasible = true;
  double metric = 0.0;
  double threshold = 0.0;
};

/// Strict feasibility-rule ordering.
bool better(const Individual& a, const Individual& b);

/// Best of `size` uniformly drawn contestants (with replacement).
std::size_t tournament_select(std::span<const Individual> population, std::size_t size, std::mt19937_64& rng);

/// BLX-0.5 on continuous genes (clipped to the box); uniform swap on
/// discrete genes.
void blend_crossover(Settings& a, Settings& b, const FactorSpace& space, std::mt19937_64& rng);

/// Gaussian step with sd = 5% of the range (clipped) for continuous genes;
/// uniform resample of the level for discrete genes.
void mutate(Settings& s, const FactorSpace& space, double rate, std::mt19937_64& rng);

/// Counter-based stream so results do not depend on evaluation order.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t generation, std::uint64_t index);

}  // namespace ga

}  // namespace exprof
