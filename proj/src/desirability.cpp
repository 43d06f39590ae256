#include "exprof/desirability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace exprof {

using nlohmann::json;

void Goal::validate() const {
  if (!(importance > 0.0) || !std::isfinite(importance))
    throw std::invalid_argument("goal importance must be positive");
  std::visit(
      [](const auto& g) {
        if (!(g.low < g.high)) throw std::invalid_argument("goal requires low < high");
      },
      kind);
  if (auto* m = std::get_if<MatchTarget>(&kind); m && !(m->low < m->target && m->target < m->high))
    throw std::invalid_argument("match target must lie strictly inside (low, high)");
}

double desirability(const Goal& goal, double y) {
  if (std::isnan(y)) return 0.0;
  if (auto* g = std::get_if<Maximize>(&goal.kind)) return std::clamp((y - g->low) / (g->high - g->low), 0.0, 1.0);
  if (auto* g = std::get_if<Minimize>(&goal.kind)) return std::clamp((g->high - y) / (g->high - g->low), 0.0, 1.0);
  const auto& g = std::get<MatchTarget>(goal.kind);
  if (y <= g.target) return std::clamp((y - g.low) / (g.target - g.low), 0.0, 1.0);
  return std::clamp((g.high - y) / (g.high - g.target), 0.0, 1.0);
}

double overall_desirability(std::span<const Goal> goals, std::span<const double> responses) {
  if (goals.size() != responses.size()) throw std::invalid_argument("one goal per response required");
  if (goals.empty()) throw std::invalid_argument("no goals");
  double log_sum = 0.0;
  double weight = 0.0;
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const double d = desirability(goals[i], responses[i]);
    if (d <= 0.0) return 0.0;
    log_sum += goals[i].importance * std::log(d);
    weight += goals[i].importance;
  }
  return std::clamp(std::exp(log_sum / weight), 0.0, 1.0);
}

json to_json(const Goal& g) {
  json j;
  if (auto* m = std::get_if<Maximize>(&g.kind))
    j = {{"goal", "maximize"}, {"low", m->low}, {"high", m->high}};
  else if (auto* m = std::get_if<Minimize>(&g.kind))
    j = {{"goal", "minimize"}, {"low", m->low}, {"high", m->high}};
  else {
    const auto& t = std::get<MatchTarget>(g.kind);
    j = {{"goal", "match_target"}, {"low", t.low}, {"target", t.target}, {"high", t.high}};
  }
  j["importance"] = g.importance;
  return j;
}

Goal goal_from_json(const json& j) {
  Goal g;
  const auto kind = j.at("goal").get<std::string>();
  const double low = j.at("low").get<double>();
  const double high = j.at("high").get<double>();
  if (kind == "maximize")
    g.kind = Maximize{low, high};
  else if (kind == "minimize")
    g.kind = Minimize{low, high};
  else if (kind == "match_target")
    g.kind = MatchTarget{low, j.at("target").get<double>(), high};
  else
    throw std::invalid_argument("unknown goal '" + kind + "'");
  g.importance = j.value("importance", 1.0);
  g.validate();
  return g;
}

std::vector<Goal> goals_from_json(const json& j) {
  const json& arr = j.is_object() ? j.at("goals") : j;
  if (!arr.is_array()) throw std::invalid_argument("goals must be a JSON array");
  std::vector<Goal> out;
  for (const auto& g : arr) out.push_back(goal_from_json(g));
  return out;
}

}  // namespace exprof
