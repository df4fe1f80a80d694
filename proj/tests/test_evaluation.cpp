#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "travelsat/error.hpp"
#include "travelsat/evaluation.hpp"
#include "travelsat/rng.hpp"

using namespace travelsat;

TEST(Metrics, HandCases) {
  const std::vector<double> y{1, 2}, f{2, 4};
  EXPECT_DOUBLE_EQ(mse(y, y), 0.0);
  EXPECT_DOUBLE_EQ(mse(y, f), 2.5);
  EXPECT_DOUBLE_EQ(mape(y, y), 0.0);
  EXPECT_DOUBLE_EQ(mape(y, f), 1.0);
  const std::vector<double> y4{4}, f5{5};
  EXPECT_DOUBLE_EQ(mape(y4, f5), 0.25);
}

TEST(Metrics, Errors) {
  const std::vector<double> a{1, 2}, b{1}, z{0, 1}, e;
  EXPECT_THROW(mse(a, b), ValidationError);
  EXPECT_THROW(mse(e, e), ValidationError);
  EXPECT_THROW(mape(z, a), ValidationError);
}

TEST(Metrics, MatchOracle) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<double> y(n), f(n);
    for (auto& v : y) v = 1.0 + 6.0 * rng.uniform01();
    for (auto& v : f) v = 1.0 + 6.0 * rng.uniform01();
    EXPECT_NEAR(mse(y, f), oracle::mse(y, f), 1e-12);
    EXPECT_NEAR(mape(y, f), oracle::mape(y, f), 1e-12);
  }
}

TEST(MeanSd, HandCases) {
  const std::vector<double> ones{1, 1, 1}, seq{1, 2, 3}, one{0.5};
  EXPECT_EQ(mean_sd(ones).mean, 1.0);
  EXPECT_EQ(*mean_sd(ones).sd, 0.0);
  EXPECT_EQ(mean_sd(seq).mean, 2.0);
  EXPECT_EQ(*mean_sd(seq).sd, 1.0);
  EXPECT_FALSE(mean_sd(one).sd);
  EXPECT_EQ(format_mean_sd({0.762, 0.114, 3}), "0.762 (0.114)");
  EXPECT_EQ(format_mean_sd(mean_sd(one)), "0.500 (n/a)");
}

TEST(MeanSd, AggregateRepeats) {
  const std::vector<MetricPair> runs{{1.5, 0.2, 10}, {1.7, 0.3, 10}, {1.7, 0.22, 10}};
  const auto row = aggregate_repeats("k=0", runs);
  EXPECT_EQ(row.config_id, "k=0");
  EXPECT_NEAR(row.mse.mean, 1.633333333, 1e-8);
  EXPECT_EQ(row.runs.size(), 3u);
  EXPECT_THROW(aggregate_repeats("x", {}), ValidationError);
}

TEST(Welch, HandCase) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  const auto r = welch_t(a, b);
  ASSERT_TRUE(r.t);
  EXPECT_NEAR(*r.t, -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(*r.t, -3.674, 1e-3);
  EXPECT_NEAR(r.df, 4.0, 1e-12);
  EXPECT_NEAR(*r.p, 0.021311641128756727, 1e-9);  // scipy.stats.ttest_ind(equal_var=False)
  EXPECT_EQ(r.stars, "*");
}

TEST(Welch, UnequalSizes) {
  const std::vector<double> a{0.1, 0.4, 0.2, 0.35}, b{0.5, 0.9, 0.7};
  const auto r = welch_t(a, b);
  EXPECT_NEAR(*r.t, -3.2543475687121535, 1e-9);
  EXPECT_NEAR(r.df, 3.3890979030820465, 1e-9);
  EXPECT_NEAR(*r.p, 0.03973506583862006, 1e-9);
}

TEST(Welch, Degenerate) {
  const std::vector<double> a{1, 2, 3}, c{5, 5, 5}, d{6, 6, 6};
  auto same = welch_t(a, a);
  EXPECT_EQ(*same.t, 0.0);
  EXPECT_EQ(*same.p, 1.0);
  auto flat = welch_t(c, c);
  EXPECT_EQ(*flat.t, 0.0);
  EXPECT_EQ(*flat.p, 1.0);
  EXPECT_EQ(flat.stars, "");
  auto det = welch_t(c, d);
  EXPECT_FALSE(det.t);
  EXPECT_FALSE(det.p);
  EXPECT_EQ(det.note, "degenerate: deterministic difference");
  const std::vector<double> single{1};
  EXPECT_THROW(welch_t(single, a), ValidationError);
}

TEST(Stars, Thresholds) {
  EXPECT_EQ(stars_for(0.009), "**");
  EXPECT_EQ(stars_for(0.01), "*");
  EXPECT_EQ(stars_for(0.049), "*");
  EXPECT_EQ(stars_for(0.05), "");
}

namespace {

ImportanceVector vec(const std::vector<std::string>& names, std::vector<double> w) {
  return normalize_importance(names, std::move(w));
}

}  // namespace

TEST(CompareImportances, IdenticalVectorsNoStars) {
  const std::vector<std::string> names{"a", "b", "c"};
  const auto v = vec(names, {0.2, 0.3, 0.5});
  const auto grid = compare_importances({{"m1", {v, v, v}}, {"m2", {v, v, v}}, {"m3", {v, v}}});
  EXPECT_EQ(grid.pairs.size(), 3u);
  ASSERT_EQ(grid.tests.size(), 3u);
  for (const auto& row : grid.tests) {
    for (const auto& t : row) {
      EXPECT_EQ(*t.t, 0.0);
      EXPECT_EQ(t.stars, "");
    }
  }
}

TEST(CompareImportances, HandComputedGrid) {
  // Tight repeats around 0.5 vs 0.1 on variable a.
  const std::vector<std::string> names{"a", "b"};
  const std::vector<ImportanceVector> m1{vec(names, {0.50, 0.50}), vec(names, {0.52, 0.48}), vec(names, {0.48, 0.52})};
  const std::vector<ImportanceVector> m2{vec(names, {0.10, 0.90}), vec(names, {0.12, 0.88}), vec(names, {0.08, 0.92})};
  const auto grid = compare_importances({{"m1", m1}, {"m2", m2}});
  ASSERT_EQ(grid.pairs.size(), 1u);
  const auto& t = grid.tests[0][0];
  // Both groups have sd 0.02; se = sqrt(2 * 0.0004 / 3).
  EXPECT_NEAR(*t.t, 0.4 / std::sqrt(2 * 0.0004 / 3), 1e-9);
  EXPECT_EQ(t.stars, "**");
  EXPECT_NEAR(grid.means[0][0], 0.5, 1e-12);
  EXPECT_NEAR(grid.means[1][0], 0.1, 1e-12);
}

TEST(CompareImportances, Errors) {
  const auto v = vec({"a", "b"}, {1, 1});
  const auto w = vec({"a", "c"}, {1, 1});
  EXPECT_THROW(compare_importances({{"m1", {v, v}}, {"m2", {w, w}}}), ValidationError);
  EXPECT_THROW(compare_importances({{"m1", {v}}, {"m2", {v, v}}}), ValidationError);
}

TEST(Importance, NormalizeAndValidate) {
  const auto v = normalize_importance({"a", "b"}, {1, 3});
  EXPECT_DOUBLE_EQ(v.at("b"), 0.75);
  EXPECT_NEAR(v.sum(), 1.0, 1e-15);
  EXPECT_NO_THROW(v.validate());
  const auto u = normalize_importance({"a", "b"}, {0, 0});
  EXPECT_DOUBLE_EQ(u.at("a"), 0.5);
  EXPECT_THROW(v.at("z"), ValidationError);
  ImportanceVector bad{{"a"}, {0.5}};
  EXPECT_THROW(bad.validate(), ValidationError);
}
