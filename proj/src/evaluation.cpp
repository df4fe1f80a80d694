#include "travelsat/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/text.hpp"

namespace travelsat {
namespace {

void check_pair(std::span<const double> y, std::span<const double> predicted) {
  if (y.empty()) throw ValidationError("metric over an empty sample");
  if (y.size() != predicted.size()) {
    throw ValidationError(fmt::format("metric length mismatch: {} labels, {} predictions", y.size(),
                                      predicted.size()));
  }
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> predicted) {
  check_pair(y, predicted);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - predicted[i];
    sum += e * e;
  }
  return sum / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> predicted) {
  check_pair(y, predicted);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw ValidationError(fmt::format("MAPE undefined: label {} is 0", i));
    sum += std::abs(y[i] - predicted[i]) / std::abs(y[i]);
  }
  return sum / static_cast<double>(y.size());
}

MetricPair evaluate_predictions(std::span<const double> y, std::span<const double> predicted) {
  return {mse(y, predicted), mape(y, predicted), y.size()};
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (const double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string format_mean_sd(const MeanSd& m, int decimals) {
  return fmt::format("{} ({})", text::format_fixed(m.mean, decimals),
                     m.sd ? text::format_fixed(*m.sd, decimals) : std::string("n/a"));
}

RunReportRow aggregate_repeats(std::string config_id, std::span<const MetricPair> runs) {
  if (runs.empty()) throw ValidationError("aggregate_repeats needs at least one run");
  RunReportRow row;
  row.config_id = std::move(config_id);
  row.runs.assign(runs.begin(), runs.end());
  std::vector<double> m;
  std::vector<double> a;
  for (const auto& r : runs) {
    m.push_back(r.mse);
    a.push_back(r.mape);
  }
  row.mse = mean_sd(m);
  row.mape = mean_sd(a);
  return row;
}

std::string stars_for(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

TTestResult welch_t(std::span<const double> a, std::span<const double> b, std::string variable) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("Welch t-test needs >= 2 values per group");
  const auto ma = mean_sd(a);
  const auto mb = mean_sd(b);
  TTestResult r;
  r.variable = std::move(variable);
  r.mean_a = ma.mean;
  r.mean_b = mb.mean;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  // Constant groups get an exact zero variance; the running mean of repeated
  // values can be off by an ulp, which would otherwise make a tiny sd.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  const bool ca = constant(a);
  const bool cb = constant(b);
  const double va = ca ? 0.0 : *ma.sd * *ma.sd / na;
  const double vb = cb ? 0.0 : *mb.sd * *mb.sd / nb;
  const double se2 = va + vb;
  if (!(se2 > 0.0)) {
    if (a.front() == b.front()) {
      r.t = 0.0;
      r.p = 1.0;
      r.df = na + nb - 2.0;
    } else {
      r.note = "degenerate: deterministic difference";
    }
    return r;
  }
  const double t = (ma.mean - mb.mean) / std::sqrt(se2);
  // Welch-Satterthwaite; a zero-variance group contributes nothing to the denominator.
  double denom = 0.0;
  if (va > 0.0) denom += va * va / (na - 1.0);
  if (vb > 0.0) denom += vb * vb / (nb - 1.0);
  r.df = se2 * se2 / denom;
  r.t = t;
  const boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  r.stars = stars_for(*r.p);
  return r;
}

ImportanceGrid compare_importances(
    const std::vector<std::pair<std::string, std::vector<ImportanceVector>>>& per_model) {
  if (per_model.size() < 2) throw ValidationError("compare_importances needs at least two models");
  ImportanceGrid g;
  g.variables = per_model.front().second.empty() ? std::vector<std::string>{}
                                                 : per_model.front().second.front().variables;
  for (const auto& [name, vectors] : per_model) {
    if (vectors.size() < 2) {
      throw ValidationError(fmt::format("model '{}' has {} repeats; need >= 2", name, vectors.size()));
    }
    g.models.push_back(name);
    std::vector<std::vector<double>> reps(g.variables.size());
    std::vector<double> means(g.variables.size(), 0.0);
    for (std::size_t v = 0; v < g.variables.size(); ++v) {
      for (const auto& vec : vectors) reps[v].push_back(vec.at(g.variables[v]));
      means[v] = mean_sd(reps[v]).mean;
    }
    for (const auto& vec : vectors) {
      if (vec.variables.size() != g.variables.size()) {
        throw ValidationError(fmt::format("model '{}' importance vector has a different variable set", name));
      }
    }
    g.repeats.push_back(std::move(reps));
    g.means.push_back(std::move(means));
  }
  for (std::size_t i = 0; i < g.models.size(); ++i) {
    for (std::size_t j = i + 1; j < g.models.size(); ++j) g.pairs.emplace_back(i, j);
  }
  g.tests.resize(g.variables.size());
  for (std::size_t v = 0; v < g.variables.size(); ++v) {
    for (const auto& [i, j] : g.pairs) {
      g.tests[v].push_back(welch_t(g.repeats[i][v], g.repeats[j][v], g.variables[v]));
    }
  }
  return g;
}

}  // namespace travelsat
