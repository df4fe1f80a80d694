#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "travelsat/importance.hpp"

namespace travelsat {

struct MetricPair {
  double mse = 0.0;
  double mape = 0.0;  ///< fraction, not percent
  std::size_t n = 0;
};

/// Mean squared error. Throws ValidationError on empty or mismatched input.
double mse(std::span<const double> y, std::span<const double> predicted);
/// Mean of |y - yhat| / |y|. Throws ValidationError if any y is 0.
double mape(std::span<const double> y, std::span<const double> predicted);
MetricPair evaluate_predictions(std::span<const double> y, std::span<const double> predicted);

/// Mean and sample (n - 1) standard deviation. The sd is absent for one value.
struct MeanSd {
  double mean = 0.0;
  std::optional<double> sd;
  std::size_t n = 0;
};
MeanSd mean_sd(std::span<const double> values);

/// "0.762 (0.114)"; "0.762 (n/a)" without an sd.
std::string format_mean_sd(const MeanSd& m, int decimals = 3);

struct RunReportRow {
  std::string config_id;
  std::vector<MetricPair> runs;
  MeanSd mse;
  MeanSd mape;
};

/// Throws ValidationError for an empty run list.
RunReportRow aggregate_repeats(std::string config_id, std::span<const MetricPair> runs);

// ---------------------------------------------------------------------------

/// "**" below 0.01, "*" below 0.05, "" otherwise.
std::string stars_for(double p);

struct TTestResult {
  std::string variable;
  double mean_a = 0.0;
  double mean_b = 0.0;
  /// Absent when both groups are constant with different means.
  std::optional<double> t;
  double df = 0.0;
  std::optional<double> p;
  std::string stars;
  /// "degenerate: deterministic difference" in the constant-groups case.
  std::string note;
};

/// Welch two-sample t-test (unequal variances), two-sided.
TTestResult welch_t(std::span<const double> a, std::span<const double> b, std::string variable = {});

struct ImportanceGrid {
  std::vector<std::string> variables;
  std::vector<std::string> models;
  /// means[m][v]: mean importance of variable v under model m.
  std::vector<std::vector<double>> means;
  /// repeats[m][v]: the per-repeat values behind means[m][v].
  std::vector<std::vector<std::vector<double>>> repeats;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< model index pairs
  /// tests[v][pair]
  std::vector<std::vector<TTestResult>> tests;
};

/// Per-variable Welch tests for every model pair, plus per-model means.
/// Each model needs >= 2 vectors, all over the same variables.
ImportanceGrid compare_importances(
    const std::vector<std::pair<std::string, std::vector<ImportanceVector>>>& per_model);

}  // namespace travelsat
