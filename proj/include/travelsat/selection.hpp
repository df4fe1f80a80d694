#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "travelsat/dataset.hpp"

namespace travelsat {

/// 1 / sqrt(||a - b||^2 + 1). Lies in (0, 1]; equals 1 exactly when a == b.
double similarity(std::span<const double> a, std::span<const double> b);

enum class SupportProvenance { similarity_ranked, random };

struct SupportSet {
  std::vector<RespondentRecord> members;  ///< labels carried in `satisfaction`
  std::vector<std::size_t> train_indices;  ///< positions in the training set
  SupportProvenance provenance = SupportProvenance::similarity_ranked;
  std::optional<std::uint64_t> seed;  ///< set for random supports

  std::size_t size() const noexcept { return members.size(); }
  bool empty() const noexcept { return members.empty(); }
  std::vector<std::string> ids() const;
};

/// Mean similarity of each training vector to all query vectors.
std::vector<double> mean_similarity(const FeatureMatrix& train, const FeatureMatrix& query);

/// Top-k training records by mean similarity to the query set; ties go to the
/// lower training index. `train_features` must be aligned with `train.records`.
SupportSet rank_support(const Dataset& train, const FeatureMatrix& train_features,
                        const FeatureMatrix& query_features, std::size_t k);

/// k distinct training records drawn uniformly without replacement.
SupportSet random_support(const Dataset& train, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct KsResult {
  std::string variable;
  double statistic = 0.0;  ///< D
  double p_value = 1.0;
  std::string stars;
  bool significant() const noexcept { return p_value < 0.05; }
};

/// Survival function of the limiting Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

/// Two-sample K-S test. D is the largest gap between the empirical CDFs; p uses
/// the asymptotic distribution at (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D with
/// ne = n1 n2 / (n1 + n2).
KsResult ks_two_sample(std::span<const double> sample, std::span<const double> population,
                       std::string variable = {});

struct RepresentativenessReport {
  std::vector<KsResult> rows;  ///< one per schema variable, schema order

  std::vector<KsResult> significant() const;
  /// "ns" or "label* ; label**" style summary of significant variables.
  std::string summary(const VariableSchema& schema) const;
  /// variable,D,p,stars table; appends an "ns" line when nothing is significant.
  std::string to_csv() const;
};

/// K-S test per variable between the support and the full dataset.
/// Categorical variables are compared on their numeric codes.
RepresentativenessReport representativeness_report(const SupportSet& support,
                                                   const Dataset& full);

/// Table-5 style cell over repeated samplings: every variable significant in at
/// least one repeat, as "<label><stars> (<count>)", joined with "; ". "ns" if none.
std::string summarize_repeats(std::span<const RepresentativenessReport> repeats,
                              const VariableSchema& schema);

}  // namespace travelsat
