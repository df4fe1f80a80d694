#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "travelsat/baselines.hpp"
#include "travelsat/dataset.hpp"
#include "travelsat/evaluation.hpp"
#include "travelsat/llm_client.hpp"
#include "travelsat/selection.hpp"

namespace travelsat {

/// Everything a run depends on. Loaded from JSON (see docs/config.md);
/// command-line flags override individual fields.
struct ExperimentConfig {
  std::string name = "experiment";

  // Data: a CSV file, or the synthetic generator when `data_path` is empty.
  std::string data_path;
  std::string schema_path;     ///< empty: built-in schema
  std::string marginals_path;  ///< empty: built-in survey marginals
  SynthesisOptions synth;

  // Protocol.
  std::vector<std::size_t> support_sizes{0, 3, 6, 9, 12, 15, 18};
  std::size_t repeats = 3;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
  /// Re-draw the train/test split for every repeat instead of once per sweep.
  bool vary_split = false;
  std::size_t batch_size = 20;
  std::size_t importance_support = 6;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  GbdtParams gbdt;

  // LLM access.
  LlmParams llm;
  std::string mock;  ///< scripted mock spec ("knn", "linear:0.3", ...); empty: HTTP endpoint
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::size_t max_parse_attempts = 2;

  // Output locations; excluded from the config hash.
  std::string cache_dir;  ///< empty: no response cache
  std::string out_dir = "out";
  bool plot = false;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  /// SHA-256 over the canonical JSON without cache_dir and out_dir.
  std::string hash() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Report files keyed by path relative to the output directory.
struct ExperimentArtifacts {
  std::string config_hash;
  std::map<std::string, std::string> files;
  std::vector<RunReportRow> rows;
  std::string summary;
  std::optional<ImportanceGrid> importance;
  std::size_t failed_trials = 0;
};

/// Writes every file atomically under `out_dir`.
void write_artifacts(const ExperimentArtifacts& artifacts, const std::string& out_dir);

/// Loads the CSV named by the config, or synthesizes data. Throws ConfigError
/// when the result is empty or unreadable.
Dataset load_experiment_data(const ExperimentConfig& config);
VariableSchema load_experiment_schema(const ExperimentConfig& config);

class ExperimentRunner {
 public:
  /// Without an explicit backend, uses the config's mock or the HTTP endpoint.
  explicit ExperimentRunner(ExperimentConfig config, std::shared_ptr<Backend> backend = nullptr);

  ExperimentArtifacts run_synth();
  /// Zero-shot prompting over the whole dataset.
  ExperimentArtifacts run_zero_shot();
  /// Similarity-ranked supports, one row per support size (k = 0 is zero-shot).
  ExperimentArtifacts run_few_shot_sweep();
  /// Random supports plus K-S representativeness tests.
  ExperimentArtifacts run_random_sweep();
  /// LR and GBDT training-fraction sweeps.
  ExperimentArtifacts run_baseline_sweep();
  /// GBDT vs zero-shot vs few-shot importances with Welch tests.
  ExperimentArtifacts run_importance_study();

  const ExperimentConfig& config() const { return config_; }
  ClientStats client_stats() const;

 private:
  struct Trial;
  enum class SweepMode { zero_shot_all, ranked, random };
  ExperimentArtifacts run_llm_sweep(SweepMode mode);
  LlmClient& client();
  Completion fetch(const Prompt& prompt, std::uint64_t trial_index);
  std::string provenance(const Dataset& data, std::string_view kind) const;
  std::string stats_json() const;

  ExperimentConfig config_;
  std::string hash_;
  std::shared_ptr<Backend> backend_;
  mutable std::mutex client_mutex_;  // guards lazy creation of client_
  std::unique_ptr<LlmClient> client_;
};

/// Joins the `*_summary.txt` files in an output directory into report.txt.
std::string assemble_report(const std::string& out_dir);

/// Gnuplot script plotting MSE and MAPE against training share for one model.
std::string gnuplot_script(std::string_view model, std::string_view csv_name);

}  // namespace travelsat
