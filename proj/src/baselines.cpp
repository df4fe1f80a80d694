#include "travelsat/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/evaluation.hpp"
#include "travelsat/rng.hpp"

namespace travelsat {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ValidationError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * m.cols()));
  }
  return m;
}

Matrix Matrix::select_columns(std::span<const std::size_t> columns) const {
  Matrix m(rows_, columns.size());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) m(r, c) = (*this)(r, columns[c]);
  }
  return m;
}

Design make_design(const Dataset& dataset, const EncodingSpec& spec, bool drop_reference) {
  Design d;
  d.variable_names = spec.schema.names();
  const auto names = spec.component_names();
  std::vector<std::size_t> keep;
  for (const auto& col : spec.columns) {
    if (col.kind == VariableKind::numeric) {
      if (col.constant) continue;
      keep.push_back(col.offset);
    } else {
      for (std::size_t k = drop_reference ? 1 : 0; k < col.width; ++k) keep.push_back(col.offset + k);
    }
  }
  for (const auto c : keep) {
    d.column_names.push_back(names[c]);
  }
  const auto owners = spec.component_variables();
  for (const auto c : keep) d.column_variables.push_back(owners[c]);
  d.X = Matrix(dataset.size(), keep.size());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const auto full = encode(dataset.records[r], spec);
    for (std::size_t c = 0; c < keep.size(); ++c) d.X(r, c) = full[keep[c]];
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kRankTolerance = 1e-10;

/// Symmetric positive semi-definite system solved through P^T A P = L L^T,
/// with greedy diagonal pivoting after the first position.
struct PivotedCholesky {
  std::size_t n = 0;
  std::vector<double> L;         // n x n, lower, in pivoted order
  std::vector<std::size_t> perm;  // perm[k] = original index at pivot position k
  std::size_t rank = 0;

  explicit PivotedCholesky(std::vector<double> A, std::size_t size) : n(size), L(size * size, 0.0) {
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto a = [&](std::size_t i, std::size_t j) -> double& { return A[i * n + j]; };
    for (std::size_t k = 0; k < n; ++k) {
      // Position 0 is the intercept and is always pivoted first, so any
      // dependency gets blamed on a predictor that pruning can drop.
      std::size_t best = k;
      for (std::size_t i = std::max<std::size_t>(k + 1, 1); k > 0 && i < n; ++i) {
        if (a(perm[i], perm[i]) > a(perm[best], perm[best])) best = i;
      }
      if (!(a(perm[best], perm[best]) > kRankTolerance)) break;
      std::swap(perm[k], perm[best]);
      for (std::size_t j = 0; j < k; ++j) std::swap(L[k * n + j], L[best * n + j]);
      const std::size_t pk = perm[k];
      const double d = std::sqrt(a(pk, pk));
      L[k * n + k] = d;
      for (std::size_t i = k + 1; i < n; ++i) {
        const std::size_t pi = perm[i];
        L[i * n + k] = a(pi, pk) / d;
      }
      // Schur complement update on the remaining block.
      for (std::size_t i = k + 1; i < n; ++i) {
        for (std::size_t j = k + 1; j <= i; ++j) {
          const double upd = L[i * n + k] * L[j * n + k];
          a(perm[i], perm[j]) -= upd;
          if (i != j) a(perm[j], perm[i]) -= upd;
        }
      }
      rank = k + 1;
    }
  }

  std::vector<double> solve(std::span<const double> b) const {
    std::vector<double> z(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= L[i * n + j] * z[j];
      z[i] = s / L[i * n + i];
    }
    std::vector<double> w(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
      double s = z[ii];
      for (std::size_t j = ii + 1; j < n; ++j) s -= L[j * n + ii] * w[j];
      w[ii] = s / L[ii * n + ii];
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) x[perm[i]] = w[i];
    return x;
  }
};

/// Column j of [1 X]; j = 0 is the intercept.
double design_at(const Matrix& X, std::size_t r, std::size_t j) { return j == 0 ? 1.0 : X(r, j - 1); }

}  // namespace

LinearModel fit_ols(const Matrix& X, std::span<const double> y, std::span<const std::string> column_names) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols() + 1;
  if (y.size() != n) throw ValidationError("OLS: label count does not match rows");
  if (n < p + 1) throw ValidationError(fmt::format("OLS needs rows >= columns + 1 ({} rows, {} columns)", n, p));
  auto name_of = [&](std::size_t j) {
    if (j == 0) return std::string("(intercept)");
    return j - 1 < column_names.size() ? column_names[j - 1] : fmt::format("x{}", j - 1);
  };

  // Column scaling so the rank tolerance is relative.
  std::vector<double> scale(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += design_at(X, r, j) * design_at(X, r, j);
    scale[j] = std::sqrt(ss);
  }
  std::vector<double> A(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      if (scale[i] > 0.0 && scale[j] > 0.0) {
        for (std::size_t r = 0; r < n; ++r) s += design_at(X, r, i) * design_at(X, r, j);
        s /= scale[i] * scale[j];
      }
      A[i * p + j] = s;
      A[j * p + i] = s;
    }
  }
  const PivotedCholesky chol(A, p);
  if (chol.rank < p) {
    std::vector<std::string> names;
    std::vector<std::size_t> indices;
    for (std::size_t k = chol.rank; k < p; ++k) {
      const auto j = chol.perm[k];
      names.push_back(name_of(j));
      if (j > 0) indices.push_back(j - 1);
    }
    std::sort(indices.begin(), indices.end());
    std::string list;
    for (const auto& s : names) list += (list.empty() ? "" : ", ") + s;
    throw RankDeficientError(
        fmt::format("design is rank deficient (rank {} of {}); dependent columns: {}", chol.rank, p, list),
        std::move(names), std::move(indices));
  }

  auto xt_times = [&](std::span<const double> v) {
    std::vector<double> g(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += design_at(X, r, j) * v[r];
      g[j] = s / scale[j];
    }
    return g;
  };
  // Solve in scaled coordinates, then one step of iterative refinement.
  std::vector<double> beta = chol.solve(xt_times(y));
  std::vector<double> resid(n);
  auto residuals = [&] {
    for (std::size_t r = 0; r < n; ++r) {
      double fit = 0.0;
      for (std::size_t j = 0; j < p; ++j) fit += design_at(X, r, j) * beta[j] / scale[j];
      resid[r] = y[r] - fit;
    }
  };
  residuals();
  const auto delta = chol.solve(xt_times(resid));
  for (std::size_t j = 0; j < p; ++j) beta[j] += delta[j];

  LinearModel m;
  m.intercept = beta[0] / scale[0];
  m.coefficients.resize(p - 1);
  for (std::size_t j = 1; j < p; ++j) m.coefficients[j - 1] = beta[j] / scale[j];
  return m;
}

std::vector<double> predict_ols(const LinearModel& model, const Matrix& X) {
  if (X.cols() != model.coefficients.size()) {
    throw ValidationError(fmt::format("OLS predict: {} columns, model has {}", X.cols(),
                                      model.coefficients.size()));
  }
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double s = model.intercept;
    for (std::size_t c = 0; c < X.cols(); ++c) s += model.coefficients[c] * X(r, c);
    out[r] = s;
  }
  return out;
}

LinearModel fit_ols_pruned(const Matrix& X, std::span<const double> y, std::span<const std::string> names,
                           std::vector<std::size_t>& kept) {
  kept.clear();
  for (std::size_t c = 0; c < X.cols(); ++c) {
    bool nonzero = false;
    for (std::size_t r = 0; r < X.rows() && !nonzero; ++r) nonzero = X(r, c) != 0.0;
    if (nonzero) kept.push_back(c);
  }
  for (;;) {
    const Matrix sub = X.select_columns(kept);
    std::vector<std::string> sub_names;
    for (const auto c : kept) sub_names.push_back(c < names.size() ? names[c] : fmt::format("x{}", c));
    try {
      return fit_ols(sub, y, sub_names);
    } catch (const RankDeficientError& e) {
      if (e.indices().empty()) throw;
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!std::binary_search(e.indices().begin(), e.indices().end(), i)) next.push_back(kept[i]);
      }
      kept = std::move(next);
    }
  }
}

// ---------------------------------------------------------------------------

void GbdtParams::validate() const {
  if (n_trees == 0) throw ValidationError("GBDT needs n_trees >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("GBDT learning rate must lie in (0, 1]");
  if (min_leaf == 0) throw ValidationError("GBDT min_leaf must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ValidationError("GBDT subsample must lie in (0, 1]");
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature) i = x[*nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const std::vector<std::vector<std::size_t>>& sorted, const GbdtParams& params)
      : X_(X), sorted_(sorted), params_(params), member_(X.rows(), 0) {}

  RegressionTree build(std::span<const double> target, const std::vector<std::size_t>& rows) {
    target_ = target;
    tree_ = RegressionTree{};
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(const std::vector<std::size_t>& rows, std::size_t depth) {
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (const auto r : rows) sum += target_[r];
    const double n = static_cast<double>(rows.size());
    tree_.nodes[id].value = sum / n;
    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf) return id;

    for (const auto r : rows) member_[r] = 1;
    const double parent = sum * sum / n;
    double best_gain = 1e-12;
    std::optional<std::size_t> best_feature;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < X_.cols(); ++f) {
      double left_sum = 0.0;
      std::size_t left_n = 0;
      double prev = 0.0;
      bool have_prev = false;
      for (const auto r : sorted_[f]) {
        if (!member_[r]) continue;
        const double x = X_(r, f);
        if (have_prev && x > prev && left_n >= params_.min_leaf && rows.size() - left_n >= params_.min_leaf) {
          const double right_sum = sum - left_sum;
          const double ln = static_cast<double>(left_n);
          const double gain = left_sum * left_sum / ln + right_sum * right_sum / (n - ln) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_threshold = prev + (x - prev) / 2.0;
          }
        }
        left_sum += target_[r];
        ++left_n;
        prev = x;
        have_prev = true;
      }
    }
    for (const auto r : rows) member_[r] = 0;
    if (!best_feature) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (const auto r : rows) (X_(r, *best_feature) <= best_threshold ? left : right).push_back(r);
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    tree_.nodes[id].gain = best_gain;
    const auto l = grow(left, depth + 1);
    const auto rr = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rr;
    return id;
  }

  const Matrix& X_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  const GbdtParams& params_;
  std::vector<char> member_;
  std::span<const double> target_;
  RegressionTree tree_;
};

}  // namespace

GbdtModel fit_gbdt(const Matrix& X, std::span<const double> y, const GbdtParams& params) {
  params.validate();
  const std::size_t n = X.rows();
  if (y.size() != n) throw ValidationError("GBDT: label count does not match rows");
  if (n == 0) throw ValidationError("GBDT: no training rows");
  GbdtModel model;
  model.params = params;
  model.learning_rate = params.learning_rate;
  model.n_features = X.cols();
  model.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

  std::vector<std::vector<std::size_t>> sorted(X.cols());
  for (std::size_t f = 0; f < X.cols(); ++f) {
    sorted[f].resize(n);
    std::iota(sorted[f].begin(), sorted[f].end(), std::size_t{0});
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
  }

  std::vector<double> fit(n, model.base_prediction);
  std::vector<double> resid(n);
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (y[i] - fit[i]) * (y[i] - fit[i]);
    return s / static_cast<double>(n);
  };
  model.training_loss.push_back(loss());

  TreeBuilder builder(X, sorted, params);
  Rng rng(params.seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto n_sample = std::max<std::size_t>(
      2 * params.min_leaf, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))));
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - fit[i];
    std::vector<std::size_t> rows = all;
    if (params.subsample < 1.0 && n_sample < n) {
      rng.shuffle(std::span(rows));
      rows.resize(n_sample);
      std::sort(rows.begin(), rows.end());
    }
    auto tree = builder.build(resid, rows);
    for (std::size_t i = 0; i < n; ++i) fit[i] += params.learning_rate * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));
    model.training_loss.push_back(loss());
  }
  return model;
}

std::vector<double> predict_gbdt(const GbdtModel& model, const Matrix& X) {
  if (X.cols() != model.n_features) {
    throw ValidationError(fmt::format("GBDT predict: {} columns, model has {}", X.cols(), model.n_features));
  }
  std::vector<double> out(X.rows(), model.base_prediction);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double s = 0.0;
    for (const auto& tree : model.trees) s += tree.predict(X.row(r));
    out[r] += model.learning_rate * s;
  }
  return out;
}

std::vector<double> gbdt_column_gains(const GbdtModel& model) {
  std::vector<double> gains(model.n_features, 0.0);
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature) gains[*node.feature] += node.gain;
    }
  }
  return gains;
}

ImportanceVector importance_gbdt(const GbdtModel& model, const Design& design) {
  if (design.column_variables.size() != model.n_features) {
    throw ValidationError("design does not match the GBDT model");
  }
  const auto gains = gbdt_column_gains(model);
  std::vector<double> per_var(design.variable_names.size(), 0.0);
  for (std::size_t c = 0; c < gains.size(); ++c) per_var[design.column_variables[c]] += gains[c];
  if (std::accumulate(per_var.begin(), per_var.end(), 0.0) <= 0.0) {
    std::clog << "warning: GBDT model has no splits; importance is uniform\n";
  }
  return normalize_importance(design.variable_names, std::move(per_var));
}

// ---------------------------------------------------------------------------

std::string_view to_string(BaselineKind kind) { return kind == BaselineKind::linear ? "LR" : "GBDT"; }

std::vector<SweepCell> fraction_sweep(const Dataset& dataset, BaselineKind kind, const SweepOptions& options) {
  if (dataset.size() < 2) throw ValidationError("fraction sweep needs at least 2 records");
  if (options.repeats == 0) throw ValidationError("fraction sweep needs repeats >= 1");
  const auto n = static_cast<double>(dataset.size());
  for (const double f : options.fractions) {
    const auto n_train = std::llround(f * n);
    if (!(f > 0.0 && f < 1.0) || n_train == 0 || n_train == static_cast<long long>(dataset.size())) {
      throw ValidationError(fmt::format("fraction {} leaves an empty train or test side", f));
    }
  }
  if (kind == BaselineKind::gbdt) options.gbdt.validate();

  const auto spec = fit_encoding(dataset);
  const auto design = make_design(dataset, spec, kind == BaselineKind::linear);
  const auto y = dataset.labels();

  std::vector<SweepCell> cells;
  for (const double f : options.fractions) {
    for (std::size_t r = 0; r < options.repeats; ++r) cells.push_back({f, r, {}, {}, 0, {}});
  }
  auto run_cell = [&](SweepCell& cell) {
    try {
      const auto parts = split(dataset, cell.fraction, mix_seed(options.seed, cell.repeat));
      auto rows_of = [&](const std::vector<std::size_t>& idx) {
        Matrix m(idx.size(), design.X.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t c = 0; c < design.X.cols(); ++c) m(i, c) = design.X(idx[i], c);
        }
        return m;
      };
      auto labels_of = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> v;
        for (const auto i : idx) v.push_back(y[i]);
        return v;
      };
      const Matrix train_X = rows_of(parts.train_indices);
      const Matrix test_X = rows_of(parts.test_indices);
      const auto train_y = labels_of(parts.train_indices);
      const auto test_y = labels_of(parts.test_indices);
      std::vector<double> predicted;
      if (kind == BaselineKind::linear) {
        std::vector<std::size_t> kept;
        const auto model = fit_ols_pruned(train_X, train_y, design.column_names, kept);
        predicted = predict_ols(model, test_X.select_columns(kept));
      } else {
        auto params = options.gbdt;
        params.seed = mix_seed(options.gbdt.seed, cell.repeat);
        predicted = predict_gbdt(fit_gbdt(train_X, train_y, params), test_X);
      }
      const auto metrics = evaluate_predictions(test_y, predicted);
      cell.mse = metrics.mse;
      cell.mape = metrics.mape;
      cell.n_test = metrics.n;
    } catch (const Error& e) {
      cell.error = e.what();
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, cells.size()));
  if (threads == 1) {
    for (auto& c : cells) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
      });
    }
  }
  return cells;
}

}  // namespace travelsat
