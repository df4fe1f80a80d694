#include "travelsat/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/evaluation.hpp"
#include "travelsat/rng.hpp"
#include "travelsat/text.hpp"

namespace travelsat {

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("similarity: length mismatch {} vs {}", a.size(), b.size()));
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    ss += d * d;
  }
  return 1.0 / std::sqrt(ss + 1.0);
}

std::vector<std::string> SupportSet::ids() const {
  std::vector<std::string> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(m.id);
  return out;
}

std::vector<double> mean_similarity(const FeatureMatrix& train, const FeatureMatrix& query) {
  if (query.empty()) throw ValidationError("query set is empty");
  std::vector<double> scores(train.size(), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    double sum = 0.0;
    for (const auto& q : query) sum += similarity(train[i], q);
    scores[i] = sum / static_cast<double>(query.size());
  }
  return scores;
}

SupportSet rank_support(const Dataset& train, const FeatureMatrix& train_features,
                        const FeatureMatrix& query_features, std::size_t k) {
  if (train_features.size() != train.size()) {
    throw ValidationError("train features are not aligned with the training records");
  }
  if (k > train.size()) {
    throw ValidationError(fmt::format("support size {} exceeds training size {}", k, train.size()));
  }
  SupportSet s;
  s.provenance = SupportProvenance::similarity_ranked;
  if (query_features.empty()) throw ValidationError("query set is empty");
  if (k == 0) return s;
  const auto scores = mean_similarity(train_features, query_features);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  for (std::size_t i = 0; i < k; ++i) {
    s.train_indices.push_back(order[i]);
    s.members.push_back(train.records[order[i]]);
  }
  return s;
}

SupportSet random_support(const Dataset& train, std::size_t k, std::uint64_t seed) {
  if (k > train.size()) {
    throw ValidationError(fmt::format("support size {} exceeds training size {}", k, train.size()));
  }
  SupportSet s;
  s.provenance = SupportProvenance::random;
  s.seed = seed;
  std::vector<std::size_t> pool(train.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
    s.train_indices.push_back(pool[i]);
    s.members.push_back(train.records[pool[i]]);
  }
  return s;
}

// ---------------------------------------------------------------------------

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form converges fast for small lambda.
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double sum = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double term = std::pow(y, (2 * j - 1) * (2 * j - 1));
      sum += term;
      if (term < 1e-18) break;
    }
    const double cdf = std::sqrt(2.0 * pi) / lambda * sum;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> sample, std::span<const double> population,
                       std::string variable) {
  if (sample.empty() || population.empty()) throw ValidationError("K-S test needs non-empty samples");
  std::vector<double> a(sample.begin(), sample.end());
  std::vector<double> b(population.begin(), population.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.variable = std::move(variable);
  r.statistic = d;
  const double en = std::sqrt(na * nb / (na + nb));
  r.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  r.stars = stars_for(r.p_value);
  return r;
}

std::vector<KsResult> RepresentativenessReport::significant() const {
  std::vector<KsResult> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out),
               [](const KsResult& r) { return r.significant(); });
  return out;
}

std::string RepresentativenessReport::summary(const VariableSchema& schema) const {
  std::string out;
  for (const auto& r : significant()) {
    const auto idx = schema.index_of(r.variable);
    if (!out.empty()) out += "; ";
    out += (idx ? schema[*idx].label : r.variable) + r.stars;
  }
  return out.empty() ? "ns" : out;
}

std::string RepresentativenessReport::to_csv() const {
  std::string out = "variable,D,p,stars\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{}\n", r.variable, text::format_fixed(r.statistic, 6),
                       text::format_fixed(r.p_value, 6), r.stars);
  }
  if (significant().empty()) out += "ns\n";
  return out;
}

RepresentativenessReport representativeness_report(const SupportSet& support,
                                                   const Dataset& full) {
  if (support.empty()) throw ValidationError("representativeness needs a non-empty support set");
  RepresentativenessReport report;
  for (std::size_t v = 0; v < full.schema.size(); ++v) {
    std::vector<double> s;
    s.reserve(support.size());
    for (const auto& m : support.members) s.push_back(m.values.at(v));
    report.rows.push_back(ks_two_sample(s, full.column(v), full.schema[v].name));
  }
  return report;
}

std::string summarize_repeats(std::span<const RepresentativenessReport> repeats,
                              const VariableSchema& schema) {
  std::string out;
  for (std::size_t v = 0; v < schema.size(); ++v) {
    int count = 0;
    std::string stars;
    for (const auto& rep : repeats) {
      for (const auto& row : rep.rows) {
        if (row.variable != schema[v].name || !row.significant()) continue;
        ++count;
        if (row.stars.size() > stars.size()) stars = row.stars;
      }
    }
    if (count == 0) continue;
    if (!out.empty()) out += "; ";
    out += fmt::format("{}{} ({})", schema[v].label, stars, count);
  }
  return out.empty() ? "ns" : out;
}

}  // namespace travelsat
