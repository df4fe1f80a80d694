#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <regex>
#include <set>

#include "test_util.hpp"
#include "travelsat/error.hpp"
#include "travelsat/evaluation.hpp"
#include "travelsat/mock_backend.hpp"
#include "travelsat/orchestrator.hpp"
#include "travelsat/text.hpp"

using namespace travelsat;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.synth.n = 100;
  c.support_sizes = {0, 3, 6};
  c.repeats = 2;
  c.mock = "knn:0.2";
  c.fractions = {0.5, 0.9};
  c.gbdt.n_trees = 30;
  return c;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

/// Wraps a backend, recording every request it sees.
class Recorder : public Backend {
 public:
  explicit Recorder(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
  Completion send(const ChatRequest& r) override {
    {
      std::lock_guard lock(m_);
      requests.push_back(r);
    }
    ++calls;
    return inner_->send(r);
  }
  std::vector<ChatRequest> requests;
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<Backend> inner_;
  std::mutex m_;
};

class GarbageBackend : public Backend {
 public:
  Completion send(const ChatRequest&) override {
    ++calls;
    return {"I would rather not say.", ""};
  }
  std::atomic<int> calls{0};
};

class DenyBackend : public Backend {
 public:
  Completion send(const ChatRequest&) override { throw CredentialError("denied"); }
};

}  // namespace

TEST(Config, JsonRoundTripAndHash) {
  auto c = small_config();
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  auto moved = c;
  moved.out_dir = "elsewhere";
  moved.cache_dir = "cache";
  EXPECT_EQ(moved.hash(), c.hash());
  auto other = c;
  other.seed = 99;
  EXPECT_NE(other.hash(), c.hash());
}

TEST(Config, ShippedConfigsLoad) {
  const std::string root = TRAVELSAT_SOURCE_DIR;
  const auto repro = ExperimentConfig::load(root + "/configs/repro-paper.json");
  EXPECT_EQ(repro.support_sizes, (std::vector<std::size_t>{0, 3, 6, 9, 12, 15, 18}));
  EXPECT_EQ(repro.repeats, 3u);
  EXPECT_EQ(repro.llm.temperature, 0.7);
  EXPECT_TRUE(repro.mock.empty());
  EXPECT_NO_THROW(repro.validate());
  const auto desk = ExperimentConfig::load(root + "/configs/desk-mock.json");
  EXPECT_EQ(desk.synth.n, 200u);
  EXPECT_EQ(desk.mock.substr(0, 3), "knn");
}

TEST(Config, Rejections) {
  EXPECT_THROW(ExperimentConfig::from_json({{"protocol", {{"repeatz", 3}}}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"protocol", {{"repeats", "three"}}}}), ConfigError);
  auto c = small_config();
  c.repeats = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.llm.temperature = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.mock = "psychic";
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.support_sizes = {0, 500};
  ExperimentRunner runner(c);
  EXPECT_THROW(runner.run_few_shot_sweep(), ConfigError);
}

TEST(Config, EmptyDatasetIsConfigError) {
  testutil::TempDir dir;
  const auto csv = (dir.path() / "empty.csv").string();
  const auto d = testutil::synthetic(1);
  auto text = format_survey(d);
  text = text.substr(0, text.find('\n') + 1);
  text::write_file_atomic(csv, text);
  auto c = small_config();
  c.data_path = csv;
  ExperimentRunner runner(c);
  EXPECT_THROW(runner.run_baseline_sweep(), ConfigError);
  c.data_path = (dir.path() / "missing.csv").string();
  EXPECT_THROW(ExperimentRunner(c).run_few_shot_sweep(), ConfigError);
}

TEST(FewShot, TableShape) {
  ExperimentRunner runner(small_config());
  const auto a = runner.run_few_shot_sweep();
  EXPECT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(a.failed_trials, 0u);
  EXPECT_NE(a.summary.find("0 (zero-shot)"), std::string::npos);
  EXPECT_NE(a.summary.find("Support set size"), std::string::npos);
  // Every metric cell is "mean (sd)".
  for (const auto& r : a.rows) {
    EXPECT_TRUE(r.mse.sd);
    EXPECT_EQ(r.runs.size(), 2u);
  }
  for (const auto& label : {"0 (zero-shot)", "3 ", "6 "}) {
    const auto at = a.summary.find(std::string("\n") + label);
    ASSERT_NE(at, std::string::npos) << label;
    const auto line = a.summary.substr(at + 1, a.summary.find('\n', at + 1) - at - 1);
    EXPECT_TRUE(std::regex_search(line, std::regex(R"(\d\.\d{3} \(\d\.\d{3}\) +\d\.\d{3} \(\d\.\d{3}\))"))) << line;
  }
  for (const auto& [path, content] : a.files) {
    EXPECT_NE(content.find(a.config_hash), std::string::npos) << path;
  }
  EXPECT_TRUE(a.files.contains("fewshot_runs.csv"));
  EXPECT_TRUE(a.files.contains("fewshot_summary.csv"));
  // One reasoning file per (k, repeat, batch): 20 queries in one batch of 20.
  std::size_t archives = 0;
  for (const auto& [path, content] : a.files) archives += path.rfind("reasoning/fewshot/", 0) == 0;
  EXPECT_EQ(archives, 3u * 2u * 1u);
}

TEST(FewShot, NoQueryLeakageAndBatching) {
  auto c = small_config();
  c.batch_size = 7;
  auto rec = std::make_shared<Recorder>(scripted_mock(c.mock, c.seed, VariableSchema::default_schema()));
  ExperimentRunner runner(c, rec);
  runner.run_few_shot_sweep();
  // 3 sizes x 2 repeats x ceil(20 / 7) batches.
  EXPECT_EQ(rec->calls, 3 * 2 * 3);
  const auto schema = VariableSchema::default_schema();
  for (const auto& r : rec->requests) {
    const auto parsed = parse_prompt(r, schema);
    std::set<std::string> q;
    for (const auto& x : parsed.queries) q.insert(x.id);
    for (const auto& e : parsed.examples) EXPECT_FALSE(q.contains(e.id));
    EXPECT_LE(parsed.queries.size(), 7u);
  }
}

TEST(FewShot, ParseFailuresMarkTrialsFailed) {
  auto c = small_config();
  c.support_sizes = {0, 3};
  auto garbage = std::make_shared<GarbageBackend>();
  ExperimentRunner runner(c, garbage);
  const auto a = runner.run_few_shot_sweep();
  EXPECT_EQ(a.failed_trials, 4u);
  EXPECT_EQ(garbage->calls, 2 * 2 * 2);  // two parse attempts per batch
  EXPECT_NE(a.summary.find("failed"), std::string::npos);
  EXPECT_NE(a.files.at("fewshot_runs.csv").find(",failed,"), std::string::npos);
}

TEST(FewShot, CredentialErrorAborts) {
  ExperimentRunner runner(small_config(), std::make_shared<DenyBackend>());
  EXPECT_THROW(runner.run_few_shot_sweep(), CredentialError);
}

TEST(FewShot, AlignmentSignal) {
  // An exemplar-free mock is miscalibrated; exemplars pull predictions toward the data.
  auto c = small_config();
  c.synth.n = 200;
  c.support_sizes = {0, 6, 18};
  c.repeats = 3;
  c.mock = "knn";
  const auto a = ExperimentRunner(c).run_few_shot_sweep();
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_LT(a.rows[2].mse.mean, a.rows[0].mse.mean);
}

TEST(Random, KsColumn) {
  ExperimentRunner runner(small_config());
  const auto a = runner.run_random_sweep();
  EXPECT_NE(a.summary.find("K-S test"), std::string::npos);
  EXPECT_NE(a.summary.find("0 (zero-shot)     \\"), std::string::npos);
  EXPECT_TRUE(a.files.contains("ks/k03_r0.csv"));
  EXPECT_TRUE(a.files.contains("random_ks.csv"));
  // Same seed, same support sets.
  EXPECT_EQ(ExperimentRunner(small_config()).run_random_sweep().files.at("random_ks.csv"),
            a.files.at("random_ks.csv"));
}

TEST(ZeroShot, WholeDataset) {
  ExperimentRunner runner(small_config());
  const auto a = runner.run_zero_shot();
  ASSERT_EQ(a.rows.size(), 1u);
  EXPECT_EQ(a.rows[0].runs[0].n, 100u);
}

TEST(Baseline, EighteenRows) {
  auto c = small_config();
  c.fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  c.synth.n = 874;
  c.plot = true;
  const auto a = ExperimentRunner(c).run_baseline_sweep();
  EXPECT_EQ(a.rows.size(), 18u);
  EXPECT_EQ(a.failed_trials, 0u);
  EXPECT_TRUE(a.files.contains("fig_lr.gp"));
  EXPECT_EQ(count(a.files.at("baseline_summary.csv"), "\n"), 2u + 18u);
}

TEST(Baseline, UnfittableCellsReportedNotThrown) {
  // 10% of 100 records is too few rows for the regression design.
  auto c = small_config();
  c.fractions = {0.1, 0.9};
  const auto a = ExperimentRunner(c).run_baseline_sweep();
  EXPECT_EQ(a.failed_trials, 2u);
  EXPECT_NE(a.files.at("baseline_summary.txt").find("LR      0.10      failed"), std::string::npos);
  EXPECT_EQ(count(a.files.at("baseline_summary.csv"), "\n"), 2u + 4u);
}

TEST(Importance, VectorsAndGrid) {
  auto c = small_config();
  c.repeats = 3;
  const auto a = ExperimentRunner(c).run_importance_study();
  ASSERT_TRUE(a.importance);
  const auto& g = *a.importance;
  EXPECT_EQ(g.models.size(), 3u);
  EXPECT_EQ(g.variables.size(), 17u);
  EXPECT_EQ(g.pairs.size(), 3u);
  for (std::size_t m = 0; m < 3; ++m) {
    double s = 0;
    for (std::size_t v = 0; v < 17; ++v) {
      EXPECT_EQ(g.repeats[m][v].size(), 3u);
      s += g.means[m][v];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  // 3 models x 3 repeats x 17 variables, plus header lines.
  EXPECT_EQ(count(a.files.at("importance_vectors.csv"), "\n"), 2u + 9u * 17u);
  EXPECT_THROW(
      [] {
        auto one = small_config();
        one.repeats = 1;
        ExperimentRunner(one).run_importance_study();
      }(),
      ConfigError);
}

namespace {

/// Answers importance prompts with fixed vectors: commute_time gets w, the rest share 1 - w.
class FixedImportance : public Backend {
 public:
  Completion send(const ChatRequest& r) override {
    const bool few = r.user.find("### Example ") != std::string::npos;
    const std::size_t repeat = r.trial_index / 2;
    const double w = (few ? std::vector<double>{0.1, 0.12, 0.08} : std::vector<double>{0.5, 0.52, 0.48})[repeat];
    std::string block = "```importance\n";
    for (const auto& name : VariableSchema::default_schema().names()) {
      block += name + "=" + text::format_double(name == "commute_time" ? w : (1.0 - w) / 16.0) + "\n";
    }
    return {block + "```\n", ""};
  }
};

}  // namespace

TEST(Importance, FixedVectorsMatchHandTests) {
  auto c = small_config();
  c.repeats = 3;
  const auto a = ExperimentRunner(c, std::make_shared<FixedImportance>()).run_importance_study();
  ASSERT_TRUE(a.importance);
  const auto& g = *a.importance;
  const auto v = static_cast<std::size_t>(
      std::find(g.variables.begin(), g.variables.end(), "commute_time") - g.variables.begin());
  std::size_t zf = 0;
  for (std::size_t p = 0; p < g.pairs.size(); ++p) {
    if (g.models[g.pairs[p].first] == "zero-shot" && g.models[g.pairs[p].second] == "few-shot") zf = p;
  }
  const auto& t = g.tests[v][zf];
  // Both groups have sample sd 0.02: t = 0.4 / sqrt(2 * 0.02^2 / 3), df = 4.
  EXPECT_NEAR(*t.t, 0.4 / std::sqrt(2 * 0.0004 / 3), 1e-6);
  EXPECT_NEAR(t.df, 4.0, 1e-6);
  EXPECT_EQ(t.stars, "**");
  EXPECT_NEAR(g.means[1][v], 0.5, 1e-12);
  EXPECT_NEAR(g.means[2][v], 0.1, 1e-12);
}

TEST(Determinism, ByteIdenticalReports) {
  auto c = small_config();
  for (auto run : {&ExperimentRunner::run_synth, &ExperimentRunner::run_zero_shot,
                   &ExperimentRunner::run_few_shot_sweep, &ExperimentRunner::run_random_sweep,
                   &ExperimentRunner::run_baseline_sweep, &ExperimentRunner::run_importance_study}) {
    ExperimentRunner r1(c), r2(c);
    const auto a = (r1.*run)();
    const auto b = (r2.*run)();
    EXPECT_EQ(a.files, b.files);
  }
}

TEST(Cache, SecondRunMakesNoTransportCalls) {
  testutil::TempDir dir("orch_cache");
  auto c = small_config();
  c.cache_dir = dir.str();
  auto first = std::make_shared<Recorder>(scripted_mock(c.mock, c.seed, VariableSchema::default_schema()));
  const auto a = ExperimentRunner(c, first).run_few_shot_sweep();
  EXPECT_GT(first->calls, 0);
  auto second = std::make_shared<Recorder>(scripted_mock(c.mock, c.seed, VariableSchema::default_schema()));
  ExperimentRunner replay(c, second);
  const auto b = replay.run_few_shot_sweep();
  EXPECT_EQ(second->calls, 0);
  EXPECT_EQ(replay.client_stats().transport_calls, 0u);
  EXPECT_EQ(a.summary, b.summary);
}

TEST(Report, AssemblesSummaries) {
  testutil::TempDir dir("report");
  auto c = small_config();
  c.out_dir = dir.str();
  ExperimentRunner runner(c);
  write_artifacts(runner.run_zero_shot(), c.out_dir);
  write_artifacts(runner.run_baseline_sweep(), c.out_dir);
  const auto report = assemble_report(c.out_dir);
  EXPECT_NE(report.find("Zero-shot"), std::string::npos);
  EXPECT_NE(report.find("Baseline"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.txt"));
  testutil::TempDir empty("report_empty");
  EXPECT_THROW(assemble_report(empty.str()), ConfigError);
}
