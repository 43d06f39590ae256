#pragma once

#include <span>
#include <variant>
#include <vector>

#include "json.hpp"

namespace exprof {

struct Maximize {
  double low = 0.0;
  double high = 1.0;
};
struct Minimize {
  double low = 0.0;
  double high = 1.0;
};
struct MatchTarget {
  double low = 0.0;
  double target = 0.5;
  double high = 1.0;
};

struct Goal {
  std::variant<Maximize, Minimize, MatchTarget> kind;
  double importance = 1.0;

  void validate() const;
};

/// Linear ramps: Maximize rises from 0 at low to 1 at high, Minimize mirrors
/// it, MatchTarget is a tent peaking at the target.
double desirability(const Goal& goal, double y);

/// (prod d_i^w_i)^(1/sum w_i); 0 as soon as one d_i is 0.
double overall_desirability(std::span<const Goal> goals, std::span<const double> responses);

nlohmann::json to_json(const Goal& g);
Goal goal_from_json(const nlohmann::json& j);
std::vector<Goal> goals_from_json(const nlohmann::json& j);

}  // namespace exprof
