#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "travelsat/dataset.hpp"
#include "travelsat/llm_client.hpp"

namespace travelsat {

/// Deterministic stand-in for a chat model.
///
/// The mock reads back the records serialized in the prompt and scores them:
///  - rule mode: the named label rule (see label_rules.hpp) plus optional noise;
///  - knn mode: the label of the nearest labeled exemplar, or the fallback
///    rule when the prompt carries no exemplars.
/// Noise is seeded from (noise_seed, trial index, record id), so repeats differ
/// and re-runs do not. Importance prompts get a vector derived from the rule
/// weights (or, in knn mode with exemplars, from exemplar-label association),
/// jittered per trial.
struct MockOptions {
  enum class Mode { rule, knn };
  Mode mode = Mode::rule;
  std::string rule = "linear";
  std::string fallback_rule = "prior";
  double noise_sd = 0.0;
  std::uint64_t noise_seed = 0;
  /// Relative per-trial jitter applied to importance vectors.
  double importance_jitter = 0.1;
};

/// Parses "<mode>[:<noise_sd>]" where mode is a label rule id or "knn".
/// Throws ConfigError for an unknown mode or a bad noise value.
MockOptions parse_mock_spec(std::string_view spec, std::uint64_t noise_seed);

/// A record recovered from prompt text.
struct ParsedRecord {
  std::string id;
  std::vector<double> values;
  std::optional<double> label;
};

struct ParsedPrompt {
  std::vector<ParsedRecord> examples;
  std::vector<ParsedRecord> queries;
  bool wants_predictions = false;
  bool wants_importance = false;
};

/// Inverse of the prompt renderer. Throws MockGrammarError on any deviation.
ParsedPrompt parse_prompt(const ChatRequest& request, const VariableSchema& schema);

class ScriptedMock final : public Backend {
 public:
  ScriptedMock(VariableSchema schema, MockOptions options);
  Completion send(const ChatRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  double score(const ParsedRecord& query, const ParsedPrompt& prompt, std::uint64_t trial) const;
  std::vector<double> importance(const ParsedPrompt& prompt, std::uint64_t trial) const;

  VariableSchema schema_;
  MockOptions options_;
  std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<ScriptedMock> scripted_mock(std::string_view spec, std::uint64_t noise_seed,
                                            const VariableSchema& schema);

}  // namespace travelsat
