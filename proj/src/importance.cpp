#include "travelsat/importance.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "travelsat/error.hpp"

namespace travelsat {

double ImportanceVector::at(std::string_view variable) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == variable) return weights[i];
  }
  throw ValidationError(fmt::format("importance vector has no variable '{}'", variable));
}

double ImportanceVector::sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

void ImportanceVector::validate(double tolerance) const {
  if (variables.size() != weights.size()) throw ValidationError("importance vector is misaligned");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) {
      throw ValidationError(fmt::format("negative importance for {}", variables[i]));
    }
  }
  if (std::abs(sum() - 1.0) > tolerance) {
    throw ValidationError(fmt::format("importances sum to {}, not 1", sum()));
  }
}

ImportanceVector normalize_importance(std::vector<std::string> variables, std::vector<double> raw) {
  if (variables.size() != raw.size()) throw ValidationError("importance vector is misaligned");
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  ImportanceVector v;
  v.variables = std::move(variables);
  v.weights = std::move(raw);
  for (auto& w : v.weights) {
    w = total > 0.0 ? w / total : 1.0 / static_cast<double>(v.weights.size());
  }
  return v;
}

}  // namespace travelsat
