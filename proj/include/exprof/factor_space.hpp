#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace exprof {

struct Continuous {
  double low = 0.0;
  double high = 1.0;
  bool operator==(const Continuous&) const = default;
};

struct Categorical {
  std::vector<std::string> levels;
  bool operator==(const Categorical&) const = default;
};

struct Ordinal {
  std::vector<std::string> levels;
  std::vector<double> scores;
  bool operator==(const Ordinal&) const = default;
};

/// A single profiler axis.
struct FactorDef {
  std::string name;
  std::variant<Continuous, Categorical, Ordinal> kind;

  bool is_continuous() const { return std::holds_alternative<Continuous>(kind); }
  bool is_categorical() const { return std::holds_alternative<Categorical>(kind); }
  bool is_ordinal() const { return std::holds_alternative<Ordinal>(kind); }
  bool is_discrete() const { return !is_continuous(); }

  /// Number of levels; 0 for continuous factors.
  std::size_t level_count() const;
  const std::vector<std::string>& levels() const;
  std::optional<std::size_t> level_index(std::string_view level) const;

  /// Throws std::invalid_argument when the definition breaks its invariants.
  void validate() const;

  bool operator==(const FactorDef&) const = default;
};

/// Factor values indexed like the FactorSpace. Continuous factors hold their
/// value; categorical and ordinal factors hold the level index. NaN marks a
/// missing value.
struct Settings {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t level(std::size_t i) const { return static_cast<std::size_t>(values[i]); }

  bool operator==(const Settings&) const = default;
};

class FactorSpace {
 public:
  FactorSpace() = default;
  explicit FactorSpace(std::vector<FactorDef> factors);

  std::size_t size() const { return factors_.size(); }
  const FactorDef& operator[](std::size_t i) const { return factors_[i]; }
  const std::vector<FactorDef>& factors() const { return factors_; }
  auto begin() const { return factors_.begin(); }
  auto end() const { return factors_.end(); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Like find() but throws std::out_of_range for unknown names.
  std::size_t index_of(std::string_view name) const;

  /// Width of the numeric encoding: 1 per continuous or ordinal factor,
  /// L-1 per categorical factor.
  std::size_t encoded_dim() const;

  /// True when every value is inside the box (continuous) or a valid level.
  bool contains(const Settings& s) const;
  /// Clip continuous values into their range and round discrete genes to a
  /// valid level.
  Settings repair(Settings s) const;

  bool operator==(const FactorSpace&) const = default;

 private:
  std::vector<FactorDef> factors_;
};

nlohmann::json to_json(const FactorSpace& space);
FactorSpace factor_space_from_json(const nlohmann::json& j);

/// Settings as a name-keyed object; discrete factors by level name.
nlohmann::json settings_to_json(const FactorSpace& space, const Settings& s);
Settings settings_from_json(const FactorSpace& space, const nlohmann::json& j);

/// Parse one factor value (number or level name) for `factor`.
double factor_value_from_json(const FactorDef& factor, const nlohmann::json& j);

}  // namespace exprof
