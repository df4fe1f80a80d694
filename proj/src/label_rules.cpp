#include "travelsat/label_rules.hpp"

#include <algorithm>
#include <cmath>

#include "travelsat/error.hpp"

namespace travelsat {
namespace {

const std::map<std::string, ReferenceScale, std::less<>>& reference_table() {
  static const std::map<std::string, ReferenceScale, std::less<>> table{
      {"age", {34.71, 12.0}},
      {"income", {21650.0, 15000.0}},
      {"walk_transit", {9.23, 6.0}},
      {"walk_parking", {10.69, 7.0}},
      {"walk_hospital", {20.50, 12.0}},
      {"walk_mall", {15.20, 9.0}},
      {"walk_restaurant", {12.26, 8.0}},
      {"commute_time", {26.97, 18.0}},
      {"weekday_trips", {5.27, 2.3}},
      {"past_commute_time", {27.19, 18.0}},
      {"peer_commute_time", {27.30, 18.0}},
  };
  return table;
}

LinearRule make_linear() {
  LinearRule r;
  r.id = "linear";
  r.intercept = 4.38;
  r.numeric_weights = {
      {"age", 0.10},           {"income", 0.05},        {"walk_transit", -0.20},
      {"walk_parking", -0.10}, {"walk_hospital", -0.05}, {"walk_mall", -0.10},
      {"walk_restaurant", -0.05}, {"commute_time", -0.45}, {"weekday_trips", -0.05},
      {"past_commute_time", 0.30}, {"peer_commute_time", 0.10},
  };
  r.categorical_effects = {
      {"commute_mode", {{1, 0.45}, {2, 0.30}, {3, -0.10}, {4, 0.10}, {5, -0.35},
                        {6, 0.15}, {7, 0.05}, {8, 0.0}, {9, 0.0}}},
      {"peer_commute_mode", {{3, -0.05}, {6, 0.05}}},
      {"gender", {{1, 0.05}}},
  };
  return r;
}

LinearRule make_prior() {
  LinearRule r;
  r.id = "prior";
  r.intercept = 5.20;
  r.numeric_weights = {
      {"income", 0.15},        {"walk_transit", -0.10}, {"commute_time", -0.80},
      {"weekday_trips", -0.35}, {"past_commute_time", -0.10},
      {"peer_commute_time", -0.10},
  };
  r.categorical_effects = {
      {"car_access", {{0, -0.40}, {1, 0.20}, {2, 0.40}, {3, 0.50}, {4, 0.50}}},
      {"commute_mode", {{1, 0.20}, {2, 0.10}, {3, -0.20}, {4, 0.30}, {5, -0.60},
                        {6, 0.60}, {7, 0.0}, {8, 0.20}, {9, 0.0}}},
  };
  return r;
}

LinearRule make_constant() {
  LinearRule r;
  r.id = "constant";
  r.intercept = 4.38;
  return r;
}

}  // namespace

ReferenceScale reference_scale(std::string_view variable) {
  const auto& table = reference_table();
  if (auto it = table.find(variable); it != table.end()) return it->second;
  return {};
}

double LinearRule::evaluate(const VariableSchema& schema, std::span<const double> values) const {
  double score = intercept;
  for (const auto& [name, weight] : numeric_weights) {
    const auto idx = schema.index_of(name);
    if (!idx) continue;
    const auto ref = reference_scale(name);
    score += weight * (values[*idx] - ref.mean) / ref.sd;
  }
  for (const auto& [name, effects] : categorical_effects) {
    const auto idx = schema.index_of(name);
    if (!idx) continue;
    const auto code = static_cast<int>(std::lround(values[*idx]));
    if (auto it = effects.find(code); it != effects.end()) score += it->second;
  }
  return std::clamp(score, 1.0, 7.0);
}

std::map<std::string, double> LinearRule::importance(const VariableSchema& schema) const {
  std::map<std::string, double> raw;
  double total = 0.0;
  for (const auto& v : schema.variables()) {
    double w = 0.0;
    if (auto it = numeric_weights.find(v.name); it != numeric_weights.end()) {
      w = std::abs(it->second);
    } else if (auto ct = categorical_effects.find(v.name); ct != categorical_effects.end()) {
      double lo = 0.0;
      double hi = 0.0;
      for (const auto& [code, effect] : ct->second) {
        lo = std::min(lo, effect);
        hi = std::max(hi, effect);
      }
      w = hi - lo;
    }
    raw[v.name] = w;
    total += w;
  }
  for (auto& [name, w] : raw) {
    w = total > 0.0 ? w / total : 1.0 / static_cast<double>(schema.size());
  }
  return raw;
}

const LinearRule& label_rule(std::string_view id) {
  static const LinearRule linear = make_linear();
  static const LinearRule prior = make_prior();
  static const LinearRule constant = make_constant();
  if (id == "linear") return linear;
  if (id == "prior") return prior;
  if (id == "constant") return constant;
  throw ValidationError("unknown label rule: " + std::string(id));
}

std::vector<std::string> label_rule_ids() { return {"linear", "prior", "constant"}; }

}  // namespace travelsat
