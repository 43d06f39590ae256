#include "exprof/factor_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace exprof {

using nlohmann::json;

std::size_t FactorDef::level_count() const {
  return is_continuous() ? 0 : levels().size();
}

const std::vector<std::string>& FactorDef::levels() const {
  if (auto* c = std::get_if<Categorical>(&kind)) return c->levels;
  if (auto* o = std::get_if<Ordinal>(&kind)) return o->levels;
  static const std::vector<std::string> none;
  return none;
}

std::optional<std::size_t> FactorDef::level_index(std::string_view level) const {
  const auto& lv = levels();
  auto it = std::find(lv.begin(), lv.end(), level);
  if (it == lv.end()) return std::nullopt;
  return static_cast<std::size_t>(it - lv.begin());
}

void FactorDef::validate() const {
  if (name.empty()) throw std::invalid_argument("factor name is empty");
  if (auto* c = std::get_if<Continuous>(&kind)) {
    if (!(std::isfinite(c->low) && std::isfinite(c->high)) || !(c->low < c->high))
      throw std::invalid_argument("factor '" + name + "': continuous range requires low < high");
    return;
  }
  const auto& lv = levels();
  std::set<std::string> distinct(lv.begin(), lv.end());
  if (lv.size() < 2 || distinct.size() != lv.size())
    throw std::invalid_argument("factor '" + name + "': needs at least 2 distinct levels");
  if (auto* o = std::get_if<Ordinal>(&kind)) {
    if (o->scores.size() != o->levels.size())
      throw std::invalid_argument("factor '" + name + "': one score per ordinal level required");
    for (std::size_t i = 1; i < o->scores.size(); ++i)
      if (!(o->scores[i] > o->scores[i - 1]))
        throw std::invalid_argument("factor '" + name + "': ordinal scores must be strictly increasing");
  }
}

FactorSpace::FactorSpace(std::vector<FactorDef> factors) : factors_(std::move(factors)) {
  std::set<std::string> names;
  for (const auto& f : factors_) {
    f.validate();
    if (!names.insert(f.name).second)
      throw std::invalid_argument("duplicate factor name '" + f.name + "'");
  }
}

std::optional<std::size_t> FactorSpace::find(std::string_view name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FactorSpace::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("unknown factor '" + std::string(name) + "'");
}

std::size_t FactorSpace::encoded_dim() const {
  std::size_t p = 0;
  for (const auto& f : factors_) p += f.is_categorical() ? f.level_count() - 1 : 1;
  return p;
}

bool FactorSpace::contains(const Settings& s) const {
  if (s.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const double v = s[i];
    if (!std::isfinite(v)) return false;
    if (auto* c = std::get_if<Continuous>(&factors_[i].kind)) {
      if (v < c->low || v > c->high) return false;
    } else if (v < 0 || v != std::floor(v) || v >= static_cast<double>(factors_[i].level_count())) {
      return false;
    }
  }
  return true;
}

Settings FactorSpace::repair(Settings s) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (auto* c = std::get_if<Continuous>(&factors_[i].kind)) {
      s[i] = std::clamp(s[i], c->low, c->high);
    } else {
      const double top = static_cast<double>(factors_[i].level_count() - 1);
      s[i] = std::clamp(std::round(s[i]), 0.0, top);
    }
  }
  return s;
}

json to_json(const FactorSpace& space) {
  json factors = json::array();
  for (const auto& f : space) {
    json j{{"name", f.name}};
    if (auto* c = std::get_if<Continuous>(&f.kind)) {
      j["kind"] = "continuous";
      j["low"] = c->low;
      j["high"] = c->high;
    } else if (auto* cat = std::get_if<Categorical>(&f.kind)) {
      j["kind"] = "categorical";
      j["levels"] = cat->levels;
    } else {
      const auto& o = std::get<Ordinal>(f.kind);
      j["kind"] = "ordinal";
      j["levels"] = o.levels;
      j["scores"] = o.scores;
    }
    factors.push_back(std::move(j));
  }
  return json{{"factors", std::move(factors)}};
}

FactorSpace factor_space_from_json(const json& j) {
  if (!j.is_object() || !j.contains("factors") || !j["factors"].is_array())
    throw std::invalid_argument("factor space JSON needs a 'factors' array");
  std::vector<FactorDef> defs;
  for (const auto& f : j["factors"]) {
    FactorDef d;
    d.name = f.at("name").get<std::string>();
    const auto kind = f.at("kind").get<std::string>();
    if (kind == "continuous") {
      d.kind = Continuous{f.at("low").get<double>(), f.at("high").get<double>()};
    } else if (kind == "categorical") {
      d.kind = Categorical{f.at("levels").get<std::vector<std::string>>()};
    } else if (kind == "ordinal") {
      Ordinal o{f.at("levels").get<std::vector<std::string>>(), {}};
      if (f.contains("scores")) {
        o.scores = f["scores"].get<std::vector<double>>();
      } else {
        for (std::size_t i = 0; i < o.levels.size(); ++i) o.scores.push_back(double(i + 1));
      }
      d.kind = std::move(o);
    } else {
      throw std::invalid_argument("unknown factor kind '" + kind + "'");
    }
    defs.push_back(std::move(d));
  }
  return FactorSpace(std::move(defs));
}

double factor_value_from_json(const FactorDef& factor, const json& j) {
  if (j.is_null()) return std::nan("");
  if (factor.is_continuous()) {
    if (!j.is_number()) throw std::invalid_argument("factor '" + factor.name + "' expects a number");
    return j.get<double>();
  }
  if (j.is_string()) {
    auto idx = factor.level_index(j.get<std::string>());
    if (!idx)
      throw std::invalid_argument("factor '" + factor.name + "' has no level '" + j.get<std::string>() + "'");
    return static_cast<double>(*idx);
  }
  if (j.is_number_integer()) return j.get<double>();
  throw std::invalid_argument("factor '" + factor.name + "' expects a level name");
}

json settings_to_json(const FactorSpace& space, const Settings& s) {
  json out = json::object();
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& f = space[i];
    if (!std::isfinite(s[i])) {
      out[f.name] = nullptr;
    } else if (f.is_continuous()) {
      out[f.name] = s[i];
    } else {
      out[f.name] = f.levels().at(s.level(i));
    }
  }
  return out;
}

Settings settings_from_json(const FactorSpace& space, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("settings must be a JSON object");
  Settings s{std::vector<double>(space.size(), std::nan(""))};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::size_t i = space.index_of(it.key());
    s[i] = factor_value_from_json(space[i], it.value());
  }
  return s;
}

}  // namespace exprof
