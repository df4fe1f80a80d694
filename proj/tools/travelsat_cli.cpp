// Command-line driver for the travel-satisfaction experiments.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/orchestrator.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string data;
  std::string mock;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string cache;
  std::optional<std::size_t> batch_size;
  std::optional<double> temperature;
  std::optional<std::size_t> n;
  std::optional<std::size_t> repeats;
  std::vector<std::size_t> sizes;
  bool plot = false;
  bool no_cache = false;
};

travelsat::ExperimentConfig build_config(const Overrides& o) {
  auto c = o.config.empty() ? travelsat::ExperimentConfig{} : travelsat::ExperimentConfig::load(o.config);
  if (!o.data.empty()) c.data_path = o.data;
  if (!o.mock.empty()) c.mock = o.mock;
  if (o.seed) {
    c.seed = *o.seed;
    c.synth.seed = *o.seed;
  }
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.cache.empty()) c.cache_dir = o.cache;
  if (o.no_cache) c.cache_dir.clear();
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.temperature) c.llm.temperature = *o.temperature;
  if (o.n) c.synth.n = *o.n;
  if (o.repeats) c.repeats = *o.repeats;
  if (!o.sizes.empty()) c.support_sizes = o.sizes;
  if (o.plot) c.plot = true;
  return c;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--data", o.data, "Survey CSV; default is the synthetic generator");
  cmd->add_option("--mock", o.mock, "Scripted mock backend, e.g. knn, linear:0.3, prior");
  cmd->add_option("--seed", o.seed, "Master seed (also seeds the synthetic data)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--cache", o.cache, "Response cache directory");
  cmd->add_flag("--no-cache", o.no_cache, "Ignore the config's cache directory");
  cmd->add_option("--batch-size", o.batch_size, "Travelers per prompt")->check(CLI::PositiveNumber);
  cmd->add_option("--temperature", o.temperature, "Sampling temperature")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--n", o.n, "Synthetic dataset size");
  cmd->add_option("--repeats", o.repeats, "Repeats per configuration")->check(CLI::PositiveNumber);
  cmd->add_option("--sizes", o.sizes, "Support set sizes, e.g. --sizes 0 3 6")->delimiter(',');
}

int emit(const travelsat::ExperimentArtifacts& a, const std::string& out_dir) {
  travelsat::write_artifacts(a, out_dir);
  std::cout << a.summary;
  std::cerr << fmt::format("wrote {} files to {} (config {})\n", a.files.size(), out_dir, a.config_hash.substr(0, 12));
  if (a.failed_trials > 0) std::cerr << fmt::format("warning: {} trial(s) failed\n", a.failed_trials);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot LLM travel-satisfaction experiments"};
  app.require_subcommand(1);
  Overrides o;

  struct Entry {
    const char* name;
    const char* help;
    travelsat::ExperimentArtifacts (travelsat::ExperimentRunner::*run)();
  };
  const std::vector<Entry> entries{
      {"synth", "Write a synthetic survey CSV", &travelsat::ExperimentRunner::run_synth},
      {"zeroshot", "Zero-shot predictions over the whole dataset", &travelsat::ExperimentRunner::run_zero_shot},
      {"fewshot", "Similarity-ranked few-shot sweep", &travelsat::ExperimentRunner::run_few_shot_sweep},
      {"random-fewshot", "Random-support sweep with K-S tests", &travelsat::ExperimentRunner::run_random_sweep},
      {"baseline-sweep", "LR and GBDT training-share sweeps", &travelsat::ExperimentRunner::run_baseline_sweep},
      {"importance", "Variable-importance study with Welch tests",
       &travelsat::ExperimentRunner::run_importance_study},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> commands;
  for (const auto& e : entries) {
    auto* cmd = app.add_subcommand(e.name, e.help);
    add_common(cmd, o);
    if (std::string(e.name) == "baseline-sweep") cmd->add_flag("--plot", o.plot, "Also write gnuplot scripts");
    commands.emplace_back(cmd, &e);
  }
  std::string report_dir = "out";
  auto* report = app.add_subcommand("report", "Join the summaries in an output directory into report.txt");
  report->add_option("--out", report_dir, "Output directory to read");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      std::cout << travelsat::assemble_report(report_dir);
      return 0;
    }
    for (const auto& [cmd, entry] : commands) {
      if (!cmd->parsed()) continue;
      auto config = build_config(o);
      travelsat::ExperimentRunner runner(config);
      return emit((runner.*(entry->run))(), config.out_dir);
    }
  } catch (const travelsat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const travelsat::CredentialError& e) {
    std::cerr << "credential error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
