#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace travelsat {

/// Non-negative weights over named variables, summing to 1.
struct ImportanceVector {
  std::vector<std::string> variables;
  std::vector<double> weights;

  /// Throws ValidationError if the variable is absent.
  double at(std::string_view variable) const;
  double sum() const;

  /// Checks non-negativity and |sum - 1| <= tolerance.
  void validate(double tolerance = 1e-9) const;

  friend bool operator==(const ImportanceVector&, const ImportanceVector&) = default;
};

/// Divides by the total. A zero total yields the uniform vector.
ImportanceVector normalize_importance(std::vector<std::string> variables,
                                      std::vector<double> raw);

}  // namespace travelsat
