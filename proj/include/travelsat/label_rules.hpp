#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "travelsat/dataset.hpp"

namespace travelsat {

/// Scripted satisfaction function over the default survey variables.
///
/// Numeric inputs are standardized with fixed reference constants (the
/// published survey means and nominal spreads), so the rule can be evaluated
/// on a single record without any fitted state. The result is clamped to [1, 7].
///
///   score = intercept
///         + sum_numeric weight[v] * (x[v] - ref_mean[v]) / ref_sd[v]
///         + sum_categorical effect[v][code]
struct LinearRule {
  std::string id;
  double intercept = 4.38;
  std::map<std::string, double> numeric_weights;
  std::map<std::string, std::map<int, double>> categorical_effects;

  /// Variables the schema lacks are ignored; unknown codes contribute 0.
  double evaluate(const VariableSchema& schema, std::span<const double> values) const;
  /// Normalized |weight| (numeric) or effect range (categorical) per schema variable.
  std::map<std::string, double> importance(const VariableSchema& schema) const;
};

/// Reference location and scale used to standardize a numeric variable.
struct ReferenceScale {
  double mean = 0.0;
  double sd = 1.0;
};
ReferenceScale reference_scale(std::string_view variable);

/// "linear": ground truth used to label synthetic data.
/// "prior": miscalibrated rule standing in for exemplar-free general knowledge.
/// "constant": always the survey mean 4.38.
/// Throws ValidationError for any other id.
const LinearRule& label_rule(std::string_view id);
std::vector<std::string> label_rule_ids();

}  // namespace travelsat
