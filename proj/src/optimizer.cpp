#include "exprof/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace exprof {

using nlohmann::json;

void GAConfig::validate() const {
  if (population < 4) throw std::invalid_argument("GA population must be at least 4");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw std::invalid_argument("crossover rate must lie in [0, 1]");
  if (mutation_rate && !(*mutation_rate >= 0.0 && *mutation_rate <= 1.0))
    throw std::invalid_argument("mutation rate must lie in [0, 1]");
  if (tournament < 1) throw std::invalid_argument("tournament size must be at least 1");
  if (elitism >= population) throw std::invalid_argument("elitism must be smaller than the population");
}

json to_json(const GAConfig& c) {
  json j{{"population", c.population},     {"generations", c.generations}, {"crossover_rate", c.crossover_rate},
         {"tournament", c.tournament},     {"elitism", c.elitism},         {"seed", c.seed},
         {"stall_limit", c.stall_limit},   {"threads", c.threads}};
  j["mutation_rate"] = c.mutation_rate ? json(*c.mutation_rate) : json(nullptr);
  return j;
}

GAConfig ga_config_from_json(const json& j, GAConfig c) {
  if (j.is_null()) return c;
  if (!j.is_object()) throw std::invalid_argument("GA config must be a JSON object");
  static const std::vector<std::string> known{"population", "generations", "crossover_rate", "mutation_rate",
                                              "tournament", "elitism",     "seed",           "stall_limit",
                                              "threads",    "v"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("unknown GA config field '" + it.key() + "'");
  c.population = j.value("population", c.population);
  c.generations = j.value("generations", c.generations);
  c.crossover_rate = j.value("crossover_rate", c.crossover_rate);
  if (j.contains("mutation_rate"))
    c.mutation_rate = j["mutation_rate"].is_null() ? std::nullopt : std::optional<double>(j["mutation_rate"].get<double>());
  c.tournament = j.value("tournament", c.tournament);
  c.elitism = j.value("elitism", c.elitism);
  c.seed = j.value("seed", c.seed);
  c.stall_limit = j.value("stall_limit", c.stall_limit);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

json to_json(const FactorSpace& space, const OptimumReport& r) {
  json j{{"v", 1},
         {"settings", settings_to_json(space, r.best)},
         {"desirability", r.objective},
         {"feasible", r.feasible},
         {"generations", r.generations},
         {"stalled", r.stalled},
         {"history", r.history}};
  j["metric"] = r.metric ? json(*r.metric) : json(nullptr);
  j["threshold"] = r.threshold ? json(*r.threshold) : json(nullptr);
  return j;
}

namespace ga {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t generation, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return std::mt19937_64(mix(mix(mix(seed) ^ generation) ^ index));
}

bool better(const Individual& a, const Individual& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (!a.feasible) return a.violation < b.violation;
  return a.objective > b.objective;
}

std::size_t tournament_select(std::span<const Individual> population, std::size_t size, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
  std::size_t best = pick(rng);
  for (std::size_t k = 1; k < size; ++k) {
    const std::size_t c = pick(rng);
    if (better(population[c], population[best])) best = c;
  }
  return best;
}

void blend_crossover(Settings& a, Settings& b, const FactorSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (auto* box = std::get_if<Continuous>(&space[i].kind)) {
      const double lo = std::min(a[i], b[i]);
      const double hi = std::max(a[i], b[i]);
      const double ext = 0.5 * (hi - lo);
      const double u1 = unif(rng);
      const double u2 = unif(rng);
      a[i] = std::clamp(lo - ext + u1 * (hi - lo + 2 * ext), box->low, box->high);
      b[i] = std::clamp(lo - ext + u2 * (hi - lo + 2 * ext), box->low, box->high);
    } else if (unif(rng) < 0.5) {
      std::swap(a[i], b[i]);
    }
  }
}

void mutate(Settings& s, const FactorSpace& space, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (unif(rng) >= rate) continue;
    if (auto* box = std::get_if<Continuous>(&space[i].kind)) {
      const double sd = 0.05 * (box->high - box->low);
      s[i] = std::clamp(s[i] + sd * normal(rng), box->low, box->high);
    } else {
      std::uniform_int_distribution<std::size_t> level(0, space[i].level_count() - 1);
      s[i] = static_cast<double>(level(rng));
    }
  }
}

}  // namespace ga

namespace {

using ga::Individual;

Settings random_genome(const FactorSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Settings s{std::vector<double>(space.size(), 0.0)};
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (auto* box = std::get_if<Continuous>(&space[i].kind)) {
      s[i] = box->low + unif(rng) * (box->high - box->low);
    } else {
      std::uniform_int_distribution<std::size_t> level(0, space[i].level_count() - 1);
      s[i] = static_cast<double>(level(rng));
    }
  }
  return s;
}

void evaluate(std::vector<Individual>& pop, std::size_t from, const Objective& objective,
              const Constraint& constraint, std::size_t threads) {
  auto eval_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Individual& ind = pop[i];
      ind.objective = objective(ind.genes);
      if (!std::isfinite(ind.objective)) ind.objective = -INFINITY;
      if (constraint) {
        const auto cv = constraint(ind.genes);
        ind.metric = cv.metric;
        ind.threshold = cv.threshold;
        ind.violation = std::isfinite(cv.metric) ? cv.metric - cv.threshold : INFINITY;
        ind.feasible = cv.metric <= cv.threshold;
      }
    }
  };
  const std::size_t count = pop.size() - from;
  if (threads <= 1 || count < 2 * threads) {
    eval_range(from, pop.size());
    return;
  }
  std::vector<std::thread> workers;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = from + t * chunk;
    const std::size_t e = std::min(pop.size(), b + chunk);
    if (b >= e) break;
    workers.emplace_back(eval_range, b, e);
  }
  for (auto& w : workers) w.join();
}

// Indices sorted best-first; ties keep population order.
std::vector<std::size_t> ranking(const std::vector<Individual>& pop) {
  std::vector<std::size_t> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ga::better(pop[a], pop[b]); });
  return idx;
}

}  // namespace

OptimumReport optimize(const Objective& objective, const Constraint& constraint, const FactorSpace& space,
                       const GAConfig& config, std::span<const Settings> seeds) {
  config.validate();
  if (!objective) throw std::invalid_argument("optimize needs an objective");
  if (space.size() == 0) throw std::invalid_argument("optimize needs at least one factor");
  const std::size_t threads =
      config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  const double mutation_rate = config.mutation_rate.value_or(1.0 / static_cast<double>(space.size()));
  const std::size_t pop_size = config.population;

  // initial population: up to half from usable seeds (evenly spaced), rest uniform
  std::vector<Individual> pop;
  std::vector<const Settings*> usable;
  for (const auto& s : seeds) {
    if (s.size() != space.size()) continue;
    if (std::any_of(s.values.begin(), s.values.end(), [](double v) { return !std::isfinite(v); })) continue;
    usable.push_back(&s);
  }
  const std::size_t n_seed = std::min(usable.size(), pop_size / 2);
  for (std::size_t k = 0; k < n_seed; ++k) {
    const std::size_t pick = n_seed == usable.size() ? k : k * usable.size() / n_seed;
    pop.push_back({space.repair(*usable[pick])});
  }
  for (std::size_t k = pop.size(); k < pop_size; ++k) {
    auto rng = ga::stream(config.seed, 0, k);
    pop.push_back({random_genome(space, rng)});
  }
  evaluate(pop, 0, objective, constraint, threads);

  Individual best = pop[ranking(pop).front()];
  OptimumReport report;
  report.history.push_back(best.objective);
  std::size_t stall = 0;
  std::size_t gen = 0;
  for (gen = 1; gen <= config.generations; ++gen) {
    const auto order = ranking(pop);
    std::vector<Individual> next;
    next.reserve(pop_size);
    for (std::size_t e = 0; e < config.elitism; ++e) next.push_back(pop[order[e]]);
    const std::size_t n_elite = next.size();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::uint64_t pair = 0; next.size() < pop_size; ++pair) {
      auto rng = ga::stream(config.seed, gen, pair);
      Settings a = pop[ga::tournament_select(pop, config.tournament, rng)].genes;
      Settings b = pop[ga::tournament_select(pop, config.tournament, rng)].genes;
      if (unif(rng) < config.crossover_rate) ga::blend_crossover(a, b, space, rng);
      ga::mutate(a, space, mutation_rate, rng);
      ga::mutate(b, space, mutation_rate, rng);
      next.push_back({std::move(a)});
      if (next.size() < pop_size) next.push_back({std::move(b)});
    }
    evaluate(next, n_elite, objective, constraint, threads);
    pop = std::move(next);

    const Individual& gen_best = pop[ranking(pop).front()];
    if (ga::better(gen_best, best)) {
      best = gen_best;
      stall = 0;
    } else {
      ++stall;
    }
    report.history.push_back(best.objective);
    if (config.stall_limit > 0 && stall >= config.stall_limit) {
      report.stalled = true;
      break;
    }
  }

  report.best = best.genes;
  report.objective = best.objective;
  report.feasible = best.feasible;
  report.generations = std::min(gen, config.generations);
  if (constraint) {
    report.metric = best.metric;
    report.threshold = best.threshold;
  }
  return report;
}

}  // namespace exprof
