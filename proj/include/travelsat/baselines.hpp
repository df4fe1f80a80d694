#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "travelsat/dataset.hpp"
#include "travelsat/importance.hpp"

namespace travelsat {

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> column(std::size_t c) const;

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  /// Copy keeping only the listed columns, in the given order.
  Matrix select_columns(std::span<const std::size_t> columns) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Model-ready features plus the schema variable owning each column.
struct Design {
  Matrix X;
  std::vector<std::string> column_names;
  std::vector<std::size_t> column_variables;
  std::vector<std::string> variable_names;  ///< schema order
};

/// Encodes a dataset. With `drop_reference`, the first category of each
/// one-hot group is omitted (needed for regression with an intercept).
/// Columns of constant numeric variables are omitted.
Design make_design(const Dataset& dataset, const EncodingSpec& spec, bool drop_reference);

// ---------------------------------------------------------------------------
// Linear regression

struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
};

/// Least squares with intercept, solved from the normal equations through a
/// diagonally pivoted Cholesky factorization plus one refinement step.
/// Throws RankDeficientError naming the dependent columns, and ValidationError
/// when rows < columns + 1.
LinearModel fit_ols(const Matrix& X, std::span<const double> y,
                    std::span<const std::string> column_names = {});
std::vector<double> predict_ols(const LinearModel& model, const Matrix& X);

// ---------------------------------------------------------------------------
// Gradient boosted regression trees

struct GbdtParams {
  std::size_t n_trees = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.05;
  std::size_t min_leaf = 5;
  /// Row fraction sampled without replacement per tree; 1 disables sampling.
  double subsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  /// Leaf when feature is absent.
  std::optional<std::size_t> feature;
  double threshold = 0.0;  ///< x <= threshold goes left
  std::size_t left = 0;
  std::size_t right = 0;
  double value = 0.0;
  double gain = 0.0;  ///< squared-error reduction of this split
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root
  double predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct GbdtModel {
  double base_prediction = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  GbdtParams params;
  std::size_t n_features = 0;
  /// Training MSE after the base prediction and after each tree.
  std::vector<double> training_loss;
};

GbdtModel fit_gbdt(const Matrix& X, std::span<const double> y, const GbdtParams& params = {});
std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& X);

/// Split-gain importance per column.
std::vector<double> gbdt_column_gains(const GbdtModel& model);

/// Split gains aggregated to schema variables and normalized. A model with no
/// splits yields the uniform vector (with a warning on stderr).
ImportanceVector importance_gbdt(const GbdtModel& model, const Design& design);

// ---------------------------------------------------------------------------
// Training-fraction sweeps

enum class BaselineKind { linear, gbdt };
std::string_view to_string(BaselineKind kind);

struct SweepCell {
  double fraction = 0.0;
  std::size_t repeat = 0;
  std::optional<double> mse;
  std::optional<double> mape;
  std::size_t n_test = 0;
  std::string error;  ///< set when the cell failed
};

struct SweepOptions {
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  GbdtParams gbdt;
  std::size_t threads = 1;
};

/// Fits on a random train share and scores the remaining records, for each
/// (fraction, repeat). The encoding is fitted on the full dataset. Cell
/// failures are recorded, not thrown; invalid fractions throw ValidationError.
std::vector<SweepCell> fraction_sweep(const Dataset& dataset, BaselineKind kind,
                                      const SweepOptions& options);

/// OLS on a design, dropping all-zero and aliased columns until the fit succeeds.
LinearModel fit_ols_pruned(const Matrix& X, std::span<const double> y,
                           std::span<const std::string> names, std::vector<std::size_t>& kept);

}  // namespace travelsat
